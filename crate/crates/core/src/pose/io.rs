use std::fmt::Write as _;
use std::path::Path;

use super::{Keypoint, PoseFrame, PoseSequence, NUM_JOINTS};
use crate::error::{Error, Result};

/// Parses the one-line-per-frame keypoint format: 54 whitespace separated
/// decimals per line (`x y c` for each joint in [`super::JOINT_NAMES`] order).
/// Blank lines and lines starting with `#` are ignored.
pub fn parse_keypoints(text: &str, fps: f64) -> Result<PoseSequence> {
    let mut frames = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|e| Error::Format {
                    what: "keypoint file",
                    detail: format!("line {}: {tok:?}: {e}", lineno + 1),
                })
            })
            .collect::<Result<_>>()?;
        if values.len() != NUM_JOINTS * 3 {
            return Err(Error::Format {
                what: "keypoint file",
                detail: format!(
                    "line {}: expected {} values, found {}",
                    lineno + 1,
                    NUM_JOINTS * 3,
                    values.len()
                ),
            });
        }
        let mut kps = [Keypoint::default(); NUM_JOINTS];
        for (kp, v) in kps.iter_mut().zip(values.chunks_exact(3)) {
            *kp = Keypoint::new(v[0], v[1], v[2]);
        }
        frames.push(PoseFrame::new(kps).map_err(|e| Error::Format {
            what: "keypoint file",
            detail: format!("line {}: {e}", lineno + 1),
        })?);
    }
    PoseSequence::new(frames, fps)
}

pub fn format_keypoints(seq: &PoseSequence) -> String {
    let mut out = String::new();
    for frame in &seq.frames {
        let mut first = true;
        for kp in &frame.keypoints {
            for v in [kp.x, kp.y, kp.confidence] {
                if !first {
                    out.push(' ');
                }
                first = false;
                write!(out, "{v}").unwrap();
            }
        }
        out.push('\n');
    }
    out
}

pub fn read_keypoint_file(path: &Path, fps: f64) -> Result<PoseSequence> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_keypoints(&text, fps)
}

pub fn write_keypoint_file(path: &Path, seq: &PoseSequence) -> Result<()> {
    std::fs::write(path, format_keypoints(seq)).map_err(|e| Error::io(path, e))
}
