use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{PoseSequence, NUM_JOINTS};
use crate::error::{Error, Result};

/// Savitzky–Golay filter settings. Defaults are a repo convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoothingConfig {
    pub window: usize,
    pub polyorder: usize,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self {
            window: 11,
            polyorder: 3,
        }
    }
}

/// Least-squares weights that evaluate, at offset 0, the degree-`polyorder`
/// polynomial fitted through samples at `offsets`.
pub fn savgol_coefficients(offsets: &[f64], polyorder: usize) -> Vec<f64> {
    let m = offsets.len();
    let cols = polyorder + 1;
    let design = DMatrix::from_fn(m, cols, |r, c| offsets[r].powi(c as i32));
    let pinv = design
        .svd(true, true)
        .pseudo_inverse(1e-12)
        .expect("svd computed with both factors");
    pinv.row(0).iter().copied().collect()
}

/// Smooths every keypoint trajectory independently with a Savitzky–Golay
/// filter. Near the ends the polynomial is fitted on the first / last full
/// window and evaluated off-centre, so the sequence keeps its length.
/// Undetected samples (confidence 0) are left out of every fit and keep
/// their raw coordinates.
pub fn smooth_sequence(seq: &PoseSequence, window: usize, polyorder: usize) -> Result<PoseSequence> {
    if window % 2 == 0 {
        return Err(Error::invalid(format!("window {window} must be odd")));
    }
    if window <= polyorder {
        return Err(Error::invalid(format!(
            "window {window} must exceed polyorder {polyorder}"
        )));
    }
    let len = seq.frames.len();
    if window > len {
        return Err(Error::invalid(format!(
            "window {window} longer than sequence of {len} frames"
        )));
    }
    let half = window / 2;

    // Weights for the all-detected case, one set per position inside the window.
    let full: Vec<Vec<f64>> = (0..window)
        .map(|pos| {
            let offsets: Vec<f64> = (0..window).map(|k| k as f64 - pos as f64).collect();
            savgol_coefficients(&offsets, polyorder)
        })
        .collect();

    let mut out = seq.clone();
    for t in 0..len {
        let start = t.saturating_sub(half).min(len - window);
        let pos = t - start;
        for j in 0..NUM_JOINTS {
            if !seq.frames[t].keypoints[j].is_detected() {
                continue;
            }
            let samples = &seq.frames[start..start + window];
            let all_detected = samples.iter().all(|f| f.keypoints[j].is_detected());
            let (x, y) = if all_detected {
                let w = &full[pos];
                samples.iter().zip(w).fold((0.0, 0.0), |(x, y), (f, w)| {
                    let kp = &f.keypoints[j];
                    (x + w * kp.x, y + w * kp.y)
                })
            } else {
                let used: Vec<(f64, f64, f64)> = samples
                    .iter()
                    .enumerate()
                    .filter(|(_, f)| f.keypoints[j].is_detected())
                    .map(|(k, f)| {
                        let kp = &f.keypoints[j];
                        (k as f64 - pos as f64, kp.x, kp.y)
                    })
                    .collect();
                let offsets: Vec<f64> = used.iter().map(|u| u.0).collect();
                let w = savgol_coefficients(&offsets, polyorder.min(used.len() - 1));
                used.iter()
                    .zip(&w)
                    .fold((0.0, 0.0), |(x, y), (u, w)| (x + w * u.1, y + w * u.2))
            };
            let kp = &mut out.frames[t].keypoints[j];
            kp.x = x;
            kp.y = y;
        }
    }
    Ok(out)
}
