//! Stage training sets assembled from a prepared dataset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{PipelineConfig, PreparedVideo, Split};
use crate::error::{Error, Result};
use crate::flow::{flow_sample_from_poses, FlowField, FlowSample, VisibilityMap};
use crate::foreground::ForegroundSample;
use crate::fusion::FusionClip;
use crate::parsing::ParsingSample;
use crate::pose::rasterize_pose;
use crate::region::restore_to_frame;

fn training(videos: &[PreparedVideo]) -> Result<Vec<&PreparedVideo>> {
    let v: Vec<&PreparedVideo> = videos.iter().filter(|v| v.split == Split::Train).collect();
    if v.is_empty() {
        return Err(Error::invalid("no training videos in the prepared dataset"));
    }
    Ok(v)
}

fn check_size(v: &PreparedVideo, cfg: &PipelineConfig) -> Result<()> {
    if v.working_size != cfg.working_size {
        return Err(Error::invalid(format!(
            "{} was prepared at {} px, config wants {}",
            v.name, v.working_size, cfg.working_size
        )));
    }
    Ok(())
}

/// `(appearance parsing, target pose, target parsing)` for every frame.
pub fn parsing_samples(videos: &[PreparedVideo], cfg: &PipelineConfig) -> Result<Vec<ParsingSample>> {
    let s = cfg.working_size;
    let mut out = Vec::new();
    for v in training(videos)? {
        check_size(v, cfg)?;
        let poses = v.working_poses()?;
        let (_, appearance, _) = v.crop(v.appearance_index)?;
        let items = (0..v.frames)
            .into_par_iter()
            .map(|t| {
                Ok(ParsingSample {
                    appearance: appearance.clone(),
                    pose: rasterize_pose(&poses.frames[t], s, s, &cfg.raster())?,
                    target: v.crop(t)?.1,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.extend(items);
    }
    Ok(out)
}

/// Body-model flow examples for the pose pairs (appearance, frame t).
pub fn flow_samples(videos: &[PreparedVideo], cfg: &PipelineConfig) -> Result<Vec<FlowSample>> {
    let s = cfg.working_size;
    let mut out = Vec::new();
    for v in training(videos)? {
        check_size(v, cfg)?;
        let poses = v.working_poses()?;
        let a = poses.frames[v.appearance_index];
        let items = (0..v.frames)
            .into_par_iter()
            .map(|t| flow_sample_from_poses(&a, &poses.frames[t], s, s, &cfg.raster()))
            .collect::<Result<Vec<_>>>()?;
        out.extend(items);
    }
    Ok(out)
}

/// Appearance crop, target parsing, body-model flow and target crop for
/// every frame. Flow is the identity when `no_flow` is set.
pub fn foreground_samples(videos: &[PreparedVideo], cfg: &PipelineConfig) -> Result<Vec<ForegroundSample>> {
    let s = cfg.working_size;
    let no_flow = cfg.no_flow || cfg.foreground.no_flow;
    let mut out = Vec::new();
    for v in training(videos)? {
        check_size(v, cfg)?;
        let poses = v.working_poses()?;
        let a = poses.frames[v.appearance_index];
        let (appearance, _, _) = v.crop(v.appearance_index)?;
        let items = (0..v.frames)
            .into_par_iter()
            .map(|t| {
                let (target, parsing, _) = v.crop(t)?;
                let (flow, visibility) = if no_flow {
                    (FlowField::zeros(s, s), VisibilityMap::filled(s, s, VisibilityMap::VISIBLE))
                } else {
                    let f = flow_sample_from_poses(&a, &poses.frames[t], s, s, &cfg.raster())?;
                    (f.flow, f.visibility)
                };
                Ok(ForegroundSample {
                    appearance: appearance.clone(),
                    parsing,
                    flow,
                    visibility,
                    target,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.extend(items);
    }
    Ok(out)
}

/// One clip of `K` consecutive frames per training video, starting at a
/// seeded offset. Foregrounds are the restored ground-truth crops.
pub fn fusion_clips(videos: &[PreparedVideo], cfg: &PipelineConfig, seed: u64) -> Result<Vec<FusionClip>> {
    let k = cfg.fusion.clip_len;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for v in training(videos)? {
        let len = k.min(v.frames);
        let start = rng.gen_range(0..=v.frames - len);
        let background = v.background()?;
        let pairs = (start..start + len)
            .into_par_iter()
            .map(|t| {
                let (crop, _, rec) = v.crop(t)?;
                Ok((restore_to_frame(&crop, &rec)?, v.source_frame(t)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let (foregrounds, targets) = pairs.into_iter().unzip();
        out.push(FusionClip {
            background,
            foregrounds,
            targets,
            bootstrap_mask: v.source_parsing(start)?.foreground_mask(),
        });
    }
    Ok(out)
}
