use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DatasetManifest, PipelineConfig, Split, VideoEntry};
use crate::error::{Error, Result};
use crate::pose::{read_keypoint_file, select_appearance_frame, smooth_sequence, write_keypoint_file, PoseSequence};
use crate::region::{
    crop_foreground, default_margin, read_crop_record, read_frame_png, read_parsing_png, write_crop_record, write_frame_png,
    write_parsing_png, CropRecord, Frame, ParsingMap,
};

const VIDEO_FILE: &str = "video.json";
const REPORT_FILE: &str = "prepare_report.json";

/// Description of one prepared video, stored as `video.json` in its folder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedVideo {
    pub name: String,
    pub split: Split,
    pub frames: usize,
    pub appearance_index: usize,
    pub height: usize,
    pub width: usize,
    pub working_size: usize,
    pub num_classes: usize,
    pub fps: f64,
    pub background: PathBuf,
    pub source_frames: Vec<PathBuf>,
    pub source_parsing: Vec<PathBuf>,
    #[serde(skip)]
    pub dir: PathBuf,
}

fn crop_stem(dir: &Path, t: usize) -> PathBuf {
    dir.join("crops").join(format!("{t:05}"))
}

impl PreparedVideo {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(VIDEO_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut v: Self = serde_json::from_str(&text)?;
        v.dir = dir.to_path_buf();
        Ok(v)
    }

    /// Masked foreground crop, its parsing and the crop record of frame `t`.
    pub fn crop(&self, t: usize) -> Result<(Frame, ParsingMap, CropRecord)> {
        if t >= self.frames {
            return Err(Error::invalid(format!("{}: frame {t} out of range", self.name)));
        }
        let stem = crop_stem(&self.dir, t);
        Ok((
            read_frame_png(&stem.with_extension("png"))?,
            read_parsing_png(&stem.with_extension("parsing.png"), self.num_classes)?,
            read_crop_record(&stem.with_extension("json"))?,
        ))
    }

    /// Smoothed poses in source-frame coordinates.
    pub fn poses(&self) -> Result<PoseSequence> {
        read_keypoint_file(&self.dir.join("poses.txt"), self.fps)
    }

    /// Smoothed poses mapped into each frame's working crop.
    pub fn working_poses(&self) -> Result<PoseSequence> {
        read_keypoint_file(&self.dir.join("working_poses.txt"), self.fps)
    }

    pub fn source_frame(&self, t: usize) -> Result<Frame> {
        read_frame_png(&self.source_frames[t])
    }

    pub fn source_parsing(&self, t: usize) -> Result<ParsingMap> {
        read_parsing_png(&self.source_parsing[t], self.num_classes)
    }

    pub fn background(&self) -> Result<Frame> {
        read_frame_png(&self.background)
    }
}

/// Videos of a prepared dataset folder, in name order.
pub fn load_prepared(dir: &Path) -> Result<Vec<PreparedVideo>> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(VIDEO_FILE).is_file())
        .collect();
    dirs.sort();
    dirs.iter().map(|d| PreparedVideo::load(d)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoFailure {
    pub name: String,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrepareReport {
    pub prepared: Vec<String>,
    pub failed: Vec<VideoFailure>,
}

fn prepare_video(v: &VideoEntry, cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let files = v.files()?;
    let raw = read_keypoint_file(&v.keypoints, cfg.fps)?;
    if raw.len() != files.len() {
        return Err(Error::invalid(format!("{} keypoint lines for {} frames", raw.len(), files.len())));
    }
    let appearance_index = match v.appearance_index {
        Some(i) if i < raw.len() => i,
        Some(i) => return Err(Error::invalid(format!("appearance index {i} out of range"))),
        None => select_appearance_frame(&raw)?,
    };
    let smoothed = smooth_sequence(&raw, cfg.smoothing.window, cfg.smoothing.polyorder)?;
    let dir = out.join(&v.name);
    std::fs::create_dir_all(dir.join("crops")).map_err(|e| Error::io(&dir, e))?;

    let size = cfg.working_size;
    let working = files
        .par_iter()
        .enumerate()
        .map(|(t, (frame_path, parsing_path))| {
            let frame = read_frame_png(frame_path)?;
            let parsing = read_parsing_png(parsing_path, cfg.num_classes())?;
            if (frame.height, frame.width) != (v.height, v.width) {
                return Err(Error::invalid(format!(
                    "{}: frame is {}x{}, manifest says {}x{}",
                    frame_path.display(),
                    frame.width,
                    frame.height,
                    v.width,
                    v.height
                )));
            }
            let margin = cfg.margin.unwrap_or_else(|| default_margin(&parsing));
            let (crop, crop_parsing, rec) = crop_foreground(&frame, &parsing, margin, size)
                .map_err(|e| Error::invalid(format!("{}: {e}", frame_path.display())))?;
            let crop = crop.masked(&crop_parsing.foreground_mask())?;
            let stem = crop_stem(&dir, t);
            write_frame_png(&stem.with_extension("png"), &crop)?;
            write_parsing_png(&stem.with_extension("parsing.png"), &crop_parsing)?;
            write_crop_record(&stem.with_extension("json"), &rec)?;
            Ok(smoothed.frames[t].map_coords(|x, y| rec.to_working(x, y)))
        })
        .collect::<Result<Vec<_>>>()?;

    write_keypoint_file(&dir.join("poses.txt"), &smoothed)?;
    write_keypoint_file(&dir.join("working_poses.txt"), &PoseSequence::new(working, cfg.fps)?)?;
    let meta = PreparedVideo {
        name: v.name.clone(),
        split: v.split,
        frames: files.len(),
        appearance_index,
        height: v.height,
        width: v.width,
        working_size: size,
        num_classes: cfg.num_classes(),
        fps: cfg.fps,
        background: v.background.clone(),
        source_frames: files.iter().map(|(f, _)| f.clone()).collect(),
        source_parsing: files.iter().map(|(_, p)| p.clone()).collect(),
        dir: dir.clone(),
    };
    let path = dir.join(VIDEO_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&path, e))
}

/// Smooths poses, selects appearance frames and writes working-size crops
/// for every video. A failing video is reported and the others continue.
pub fn prepare(manifest: &DatasetManifest, cfg: &PipelineConfig, out: &Path) -> Result<PrepareReport> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let results: Vec<(String, Result<()>)> = manifest
        .videos
        .par_iter()
        .map(|v| (v.name.clone(), prepare_video(v, cfg, out)))
        .collect();
    let mut report = PrepareReport::default();
    for (name, r) in results {
        match r {
            Ok(()) => report.prepared.push(name),
            Err(e) => {
                log::error!("prepare {name}: {e}");
                report.failed.push(VideoFailure {
                    name,
                    kind: e.kind().to_string(),
                    message: e.to_string(),
                });
            }
        }
    }
    let path = out.join(REPORT_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&report)?).map_err(|e| Error::io(&path, e))?;
    Ok(report)
}
