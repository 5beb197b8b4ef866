//! Appearance flow: ground-truth correspondence from rasterized triangle
//! scenes, the flow/visibility regressor, its losses, and the warping
//! primitive used by the foreground generator.
//!
//! Flow is stored target→source: target pixel `p` samples the source
//! (appearance) image at `p + flow(p)`.

mod body;
mod io;
mod loss;
mod regressor;
mod scene;
pub(crate) mod train;
pub(crate) mod warp;

pub use body::{body_faces, dance_pose, BodyModel, BodyPart, BODY_PARTS};
pub use io::{read_flo, read_visibility_png, write_flo, write_visibility_png, FLO_MAGIC};
pub use loss::{flow_losses, flow_losses_tensor, FlowLosses};
pub use regressor::{FlowNetConfig, FlowPrediction, FlowRegressor};
pub use scene::{oracle_flow, render_faces, CorrespondenceScene, Face, OracleOutput, Rendered};
pub use train::{flow_sample_from_poses, train_flow_stage, FlowSample, FlowStageConfig};
pub use warp::{rescale_flow, warp_by_flow, warp_frame, WarpPlan, WARP_BOUNDS_TOLERANCE};

use crate::error::{Error, Result};

/// Dense `H × W × 2` displacement field in pixels, interleaved `(du, dv)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl FlowField {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * 2 {
            return Err(Error::invalid("flow buffer does not match its dimensions"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("flow contains non-finite values"));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::constant(height, width, 0.0, 0.0)
    }

    pub fn constant(height: usize, width: usize, du: f32, dv: f32) -> Self {
        let mut data = Vec::with_capacity(height * width * 2);
        for _ in 0..height * width {
            data.push(du);
            data.push(dv);
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn at(&self, y: usize, x: usize) -> (f32, f32) {
        let i = (y * self.width + x) * 2;
        (self.data[i], self.data[i + 1])
    }

    pub fn set(&mut self, y: usize, x: usize, du: f32, dv: f32) {
        let i = (y * self.width + x) * 2;
        self.data[i] = du;
        self.data[i + 1] = dv;
    }
}

/// Per-pixel visibility class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisibilityMap {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<u8>,
}

impl VisibilityMap {
    pub const BACKGROUND: u8 = 0;
    pub const VISIBLE: u8 = 1;
    pub const INVISIBLE: u8 = 2;

    pub fn new(height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::invalid("visibility buffer does not match its dimensions"));
        }
        if labels.iter().any(|&l| l > 2) {
            return Err(Error::invalid("visibility labels must be 0, 1 or 2"));
        }
        Ok(Self {
            height,
            width,
            labels,
        })
    }

    pub fn filled(height: usize, width: usize, label: u8) -> Self {
        Self {
            height,
            width,
            labels: vec![label; height * width],
        }
    }

    pub fn at(&self, y: usize, x: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    /// Nearest-neighbour resize (half-pixel centres).
    pub fn resize_nearest(&self, height: usize, width: usize) -> Self {
        let sy = self.height as f64 / height as f64;
        let sx = self.width as f64 / width as f64;
        let mut labels = Vec::with_capacity(height * width);
        for v in 0..height {
            let y = (((v as f64 + 0.5) * sy - 0.5) + 0.5).floor().clamp(0.0, (self.height - 1) as f64) as usize;
            for u in 0..width {
                let x = (((u as f64 + 0.5) * sx - 0.5) + 0.5).floor().clamp(0.0, (self.width - 1) as f64) as usize;
                labels.push(self.at(y, x));
            }
        }
        Self {
            height,
            width,
            labels,
        }
    }
}

/// Channel-major `C × H × W` feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::invalid("feature buffer does not match its dimensions"));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }
}
