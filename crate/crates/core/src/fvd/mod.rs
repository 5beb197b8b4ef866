//! Fréchet video distance between sets of real and generated clips.

mod embed;
mod frechet;
mod i3d;

pub use embed::{ClipEmbedder, EmbedderSpec, RandomProjectionEmbedder};
pub use frechet::{frechet_distance, GaussianStats, EIGEN_CLAMP};
pub use i3d::{I3dEmbedder, I3dEndpoint, I3dOptions};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::region::Frame;

/// Number of frames per evaluated clip.
pub const DEFAULT_CLIP_LEN: usize = 30;

/// The clip starting at frame 0, or nothing (with a warning) when the video
/// is shorter than `length`.
pub fn extract_clips(video: &[Frame], length: usize) -> Result<Vec<&[Frame]>> {
    if length == 0 {
        return Err(Error::invalid("clip length must be positive"));
    }
    if video.len() < length {
        log::warn!("skipping a {}-frame video: clips need {length} frames", video.len());
        return Ok(Vec::new());
    }
    Ok(vec![&video[..length]])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FvdReport {
    pub fvd: f64,
    pub n_real: usize,
    pub n_fake: usize,
    pub d: usize,
}

fn stats_of(videos: &[Vec<Frame>], embedder: &dyn ClipEmbedder, clip_len: usize, side: &str) -> Result<(GaussianStats, usize)> {
    let mut clips = Vec::new();
    for v in videos {
        clips.extend(extract_clips(v, clip_len)?);
    }
    if clips.len() < 2 {
        return Err(Error::invalid(format!("{side} set has {} usable clips, need at least 2", clips.len())));
    }
    let feats = clips.par_iter().map(|c| embedder.embed(c)).collect::<Result<Vec<_>>>()?;
    Ok((GaussianStats::from_samples(&feats)?, clips.len()))
}

/// Embeds one clip per video on each side, fits Gaussians and returns their
/// Fréchet distance.
pub fn compute_fvd(real: &[Vec<Frame>], fake: &[Vec<Frame>], embedder: &dyn ClipEmbedder, clip_len: usize) -> Result<FvdReport> {
    let (a, n_real) = stats_of(real, embedder, clip_len, "real")?;
    let (b, n_fake) = stats_of(fake, embedder, clip_len, "fake")?;
    Ok(FvdReport {
        fvd: frechet_distance(&a, &b)?,
        n_real,
        n_fake,
        d: embedder.dim(),
    })
}
