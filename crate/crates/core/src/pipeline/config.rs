use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowStageConfig;
use crate::foreground::ForegroundStageConfig;
use crate::fusion::FusionStageConfig;
use crate::parsing::ParsingStageConfig;
use crate::pose::{RasterOptions, SmoothingConfig};

pub const WORKING_SIZE: usize = 448;

/// Settings for every stage plus the ablation switches. Missing fields in a
/// config file take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub parsing: ParsingStageConfig,
    pub flow: FlowStageConfig,
    pub foreground: ForegroundStageConfig,
    pub fusion: FusionStageConfig,
    pub working_size: usize,
    /// Foreground generation without appearance flow.
    pub no_flow: bool,
    /// Parsing-mask overlays instead of the fusion network.
    pub no_fusion: bool,
    pub seed: u64,
    pub smoothing: SmoothingConfig,
    /// Crop margin in pixels; `None` uses 10% of the larger box side.
    pub margin: Option<usize>,
    /// Extra border around the source poses' joint box, as a fraction of its
    /// larger side, when placing generated frames.
    pub placement_margin: f64,
    pub fps: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            parsing: ParsingStageConfig::default(),
            flow: FlowStageConfig::default(),
            foreground: ForegroundStageConfig::default(),
            fusion: FusionStageConfig::default(),
            working_size: WORKING_SIZE,
            no_flow: false,
            no_fusion: false,
            seed: 0,
            smoothing: SmoothingConfig::default(),
            margin: None,
            placement_margin: 0.2,
            fps: 30.0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let stride = self.foreground.generator.stride();
        if self.working_size == 0 || self.working_size % stride != 0 {
            return Err(Error::invalid(format!(
                "working size {} is not a positive multiple of the generator stride {stride}",
                self.working_size
            )));
        }
        if self.parsing.num_classes != self.foreground.generator.num_classes {
            return Err(Error::invalid("parsing and foreground stages disagree on the number of classes"));
        }
        if !(self.placement_margin >= 0.0) || !(self.fps > 0.0) {
            return Err(Error::invalid("placement margin must be non-negative and fps positive"));
        }
        self.parsing.validate()
    }

    pub fn num_classes(&self) -> usize {
        self.parsing.num_classes
    }

    pub fn raster(&self) -> RasterOptions {
        RasterOptions::for_working_size(self.working_size)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }
}
