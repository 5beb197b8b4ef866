use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineConfig;
use crate::error::{Error, Result, StageContext};
use crate::flow::{FlowField, FlowRegressor, VisibilityMap};
use crate::foreground::ForegroundModels;
use crate::fusion::{fuse_sequence, FusionNetwork};
use crate::nn::Checkpoint;
use crate::parsing::{generate_parsing, ParsingGenerator};
use crate::pose::{rasterize_pose, PoseFrame, PoseSequence};
use crate::region::{composite, crop_foreground, default_margin, restore_parsing, restore_to_frame, write_frame_png, CropRecord, Frame, Mask, ParsingMap};

/// The person to animate: full frame, its parsing and its pose.
#[derive(Debug, Clone)]
pub struct AppearanceInput {
    pub frame: Frame,
    pub parsing: ParsingMap,
    pub pose: PoseFrame,
}

/// The three stage models and the fusion network.
#[derive(Debug, Clone)]
pub struct StageModels {
    pub parsing: ParsingGenerator,
    pub flow: FlowRegressor,
    pub foreground: ForegroundModels,
    pub fusion: FusionNetwork,
}

/// Checkpoint stems inside a model folder.
pub const MODEL_STEMS: [&str; 4] = ["parsing", "flow", "foreground", "fusion"];

fn present(dir: Option<&Path>, stem: &str) -> Option<PathBuf> {
    let p = dir?.join(stem);
    Checkpoint::at(&p).weights.is_file().then_some(p)
}

impl StageModels {
    /// Freshly initialised models for `cfg`.
    pub fn init(cfg: &PipelineConfig, seed: u64) -> Result<Self> {
        Ok(Self {
            parsing: ParsingGenerator::new(cfg.parsing.net_config(), seed)?,
            flow: FlowRegressor::new(cfg.flow.net.clone(), seed.wrapping_add(10))?,
            foreground: ForegroundModels::new(cfg.foreground.clone(), seed.wrapping_add(20))?,
            fusion: FusionNetwork::new(cfg.fusion.network.clone(), seed.wrapping_add(30))?,
        })
    }

    /// Loads every checkpoint found in `dir`; the others are initialised
    /// from `seed` with a warning.
    pub fn load_or_init(dir: Option<&Path>, cfg: &PipelineConfig, seed: u64) -> Result<Self> {
        let mut m = Self::init(cfg, seed)?;
        let warn = |stem: &str| log::warn!("no {stem} checkpoint; using untrained weights from seed {seed}");
        match present(dir, "parsing") {
            Some(p) => m.parsing = ParsingGenerator::load(&p).stage("parsing")?,
            None => warn("parsing"),
        }
        match present(dir, "flow") {
            Some(p) => m.flow = FlowRegressor::load(&p).stage("flow")?,
            None => warn("flow"),
        }
        match present(dir, "foreground") {
            Some(p) => m.foreground = ForegroundModels::load(&p).stage("foreground")?,
            None => warn("foreground"),
        }
        match present(dir, "fusion") {
            Some(p) => m.fusion = FusionNetwork::load(&p).stage("fusion")?,
            None => warn("fusion"),
        }
        Ok(m)
    }
}

/// Everything `transfer` produced, per frame.
#[derive(Debug, Clone)]
pub struct TransferOutput {
    pub frames: Vec<Frame>,
    /// Generated parsing at working resolution.
    pub parsings: Vec<ParsingMap>,
    /// Generated foregrounds restored to the output frame.
    pub foregrounds: Vec<Frame>,
    /// Parsing-derived foreground masks in the output frame.
    pub masks: Vec<Mask>,
    /// Placement of the working square inside the output frame.
    pub placement: CropRecord,
}

/// Working square placed over the union of all source joint boxes, grown by
/// `margin` of its larger side and clamped to the frame.
pub fn placement_record(source: &PoseSequence, height: usize, width: usize, margin: f64, size: usize) -> Result<CropRecord> {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for b in source.frames.iter().filter_map(PoseFrame::bounds) {
        x0 = x0.min(b.0);
        y0 = y0.min(b.1);
        x1 = x1.max(b.2);
        y1 = y1.max(b.3);
    }
    if !x0.is_finite() {
        return Err(Error::invalid("source poses have no detected joints"));
    }
    let grow = margin * (x1 - x0).max(y1 - y0).max(1.0);
    let clamp = |v: f64, hi: usize| v.clamp(0.0, hi as f64);
    let top = clamp((y0 - grow).floor(), height) as usize;
    let left = clamp((x0 - grow).floor(), width) as usize;
    let bottom = (clamp((y1 + grow).ceil() + 1.0, height) as usize).max(top + 1).min(height);
    let right = (clamp((x1 + grow).ceil() + 1.0, width) as usize).max(left + 1).min(width);
    if top >= bottom || left >= right {
        return Err(Error::invalid("source poses lie outside the output frame"));
    }
    CropRecord::from_box((top, left, bottom, right), height, width, size)
}

/// Animates `appearance` with the `source` poses (already smoothed) over
/// `background`. Stages 1 and 2 run per frame in parallel; fusion runs
/// sequentially.
pub fn transfer(
    appearance: &AppearanceInput,
    source: &PoseSequence,
    models: &StageModels,
    background: &Frame,
    cfg: &PipelineConfig,
) -> Result<TransferOutput> {
    cfg.validate()?;
    let s = cfg.working_size;
    let (h, w) = (background.height, background.width);
    let margin = cfg.margin.unwrap_or_else(|| default_margin(&appearance.parsing));
    let (app_crop, app_parsing, app_rec) = crop_foreground(&appearance.frame, &appearance.parsing, margin, s).stage("appearance")?;
    let app_crop = app_crop.masked(&app_parsing.foreground_mask())?;
    let raster = cfg.raster();
    let app_pose = rasterize_pose(&appearance.pose.map_coords(|x, y| app_rec.to_working(x, y)), s, s, &raster).stage("appearance")?;
    let placement = placement_record(source, h, w, cfg.placement_margin, s).stage("placement")?;

    let per_frame = source
        .frames
        .par_iter()
        .map(|pose| {
            let target = rasterize_pose(&pose.map_coords(|x, y| placement.to_working(x, y)), s, s, &raster).stage("pose")?;
            let parsing = generate_parsing(&models.parsing, &app_parsing, &target).stage("parsing")?;
            let (flow, vis) = if cfg.no_flow {
                (FlowField::zeros(s, s), VisibilityMap::filled(s, s, VisibilityMap::VISIBLE))
            } else {
                let p = models.flow.predict(&app_pose, &target).stage("flow")?;
                (p.flow, p.visibility)
            };
            let fg = models.foreground.generate(&app_crop, &parsing, &flow, &vis).stage("foreground")?;
            let fg_full = restore_to_frame(&fg, &placement).stage("restore")?;
            let mask = restore_parsing(&parsing, &placement).stage("restore")?.foreground_mask();
            Ok((parsing, fg_full, mask))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut parsings = Vec::with_capacity(per_frame.len());
    let mut foregrounds = Vec::with_capacity(per_frame.len());
    let mut masks = Vec::with_capacity(per_frame.len());
    for (p, f, m) in per_frame {
        parsings.push(p);
        foregrounds.push(f);
        masks.push(m);
    }

    let frames = if cfg.no_fusion || foregrounds.len() < 2 {
        foregrounds
            .iter()
            .zip(&masks)
            .map(|(f, m)| composite(f, background, m))
            .collect::<Result<Vec<_>>>()
            .stage("fusion")?
    } else {
        fuse_sequence(&models.fusion, background, &foregrounds, &masks[0]).stage("fusion")?
    };
    Ok(TransferOutput {
        frames,
        parsings,
        foregrounds,
        masks,
        placement,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WrittenFrame {
    pub file: String,
    pub sha256: String,
}

/// Writes `00000.png, 00001.png, ...` into `dir` and returns each file's
/// SHA-256 digest.
pub fn write_frames(dir: &Path, frames: &[Frame]) -> Result<Vec<WrittenFrame>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    frames
        .iter()
        .enumerate()
        .map(|(t, f)| {
            let file = format!("{t:05}.png");
            let path = dir.join(&file);
            write_frame_png(&path, f)?;
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let digest = Sha256::digest(&bytes);
            Ok(WrittenFrame {
                file,
                sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
            })
        })
        .collect()
}

/// Encodes the numbered PNGs of `dir` into `video` with an external ffmpeg.
/// Returns `false`, after a warning, when ffmpeg is not installed.
pub fn mux_video(dir: &Path, fps: f64, video: &Path) -> Result<bool> {
    mux_with("ffmpeg", dir, fps, video)
}

fn mux_with(program: &str, dir: &Path, fps: f64, video: &Path) -> Result<bool> {
    let status = std::process::Command::new(program)
        .args(["-y", "-loglevel", "error", "-framerate"])
        .arg(format!("{fps}"))
        .arg("-i")
        .arg(dir.join("%05d.png"))
        .args(["-pix_fmt", "yuv420p"])
        .arg(video)
        .status();
    let status = match status {
        Ok(s) => s,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            log::warn!("{program} not found; keeping frames only");
            return Ok(false);
        }
        Err(e) => return Err(Error::io(program, e)),
    };
    if !status.success() {
        return Err(Error::invalid(format!("{program} exited with {status}")));
    }
    Ok(true)
}
