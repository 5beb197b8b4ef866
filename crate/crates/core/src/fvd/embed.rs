use std::path::PathBuf;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::I3dEmbedder;
use crate::error::{Error, Result};
use crate::region::Frame;

/// Maps a fixed-length clip to a `dim()`-vector, deterministically.
pub trait ClipEmbedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, clip: &[Frame]) -> Result<Vec<f64>>;
}

/// Fixed Gaussian projection of block-averaged frames. Only meant for tests
/// and smoke runs; its distances are not comparable to I3D-based FVD.
#[derive(Debug, Clone)]
pub struct RandomProjectionEmbedder {
    dim: usize,
    seed: u64,
    grid: usize,
}

impl RandomProjectionEmbedder {
    pub const DEFAULT_DIM: usize = 16;
    pub const DEFAULT_GRID: usize = 8;

    pub fn new(dim: usize, seed: u64) -> Self {
        Self {
            dim,
            seed,
            grid: Self::DEFAULT_GRID,
        }
    }

    pub fn with_grid(mut self, grid: usize) -> Self {
        self.grid = grid.max(1);
        self
    }

    /// `grid × grid × 3` block means of one frame.
    fn pool(&self, f: &Frame) -> Vec<f64> {
        let g = self.grid;
        let mut sum = vec![0f64; g * g * 3];
        let mut count = vec![0usize; g * g];
        for y in 0..f.height {
            let cy = y * g / f.height;
            for x in 0..f.width {
                let cell = cy * g + x * g / f.width;
                count[cell] += 1;
                for c in 0..3 {
                    sum[cell * 3 + c] += f.data[(y * f.width + x) * 3 + c] as f64;
                }
            }
        }
        for (i, s) in sum.iter_mut().enumerate() {
            *s /= count[i / 3].max(1) as f64;
        }
        sum
    }
}

impl ClipEmbedder for RandomProjectionEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, clip: &[Frame]) -> Result<Vec<f64>> {
        if clip.is_empty() {
            return Err(Error::invalid("cannot embed an empty clip"));
        }
        let x: Vec<f64> = clip.iter().flat_map(|f| self.pool(f)).collect();
        let scale = 1.0 / (x.len() as f64).sqrt();
        // The projection depends only on the seed and the input length.
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (x.len() as u64).rotate_left(32));
        let mut out = vec![0f64; self.dim];
        for o in out.iter_mut() {
            *o = x.iter().map(|v| v * Distribution::<f64>::sample(&StandardNormal, &mut rng)).sum::<f64>() * scale;
        }
        Ok(out)
    }
}

/// Embedder selection as written on the command line: `random` or
/// `i3d:<weights.safetensors>`.
#[derive(Debug, Clone, PartialEq)]
pub enum EmbedderSpec {
    Random,
    I3d(PathBuf),
}

impl FromStr for EmbedderSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "random" => Ok(Self::Random),
            Some(("i3d", path)) if !path.is_empty() => Ok(Self::I3d(PathBuf::from(path))),
            _ => Err(Error::invalid(format!("unknown embedder {s:?}; expected random or i3d:<path>"))),
        }
    }
}

impl EmbedderSpec {
    pub fn build(&self) -> Result<Box<dyn ClipEmbedder>> {
        Ok(match self {
            Self::Random => Box::new(RandomProjectionEmbedder::new(RandomProjectionEmbedder::DEFAULT_DIM, 0)),
            Self::I3d(path) => Box::new(I3dEmbedder::load(path, Default::default())?),
        })
    }
}
