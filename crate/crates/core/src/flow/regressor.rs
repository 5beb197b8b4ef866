use std::path::Path;

use candle_core::{Module, Tensor};
use candle_nn::VarBuilder;
use serde::{Deserialize, Serialize};

use super::{FeatureMap, FlowField, VisibilityMap};
use crate::error::{Error, Result};
use crate::nn::{conv, Conv2d, load_into, pad_to_multiple, pose_maps_to_tensor, save_checkpoint, upsample2, ConvBlock, ParamStore};
use crate::pose::{PoseMap, POSE_CHANNELS};

pub(crate) const CHECKPOINT_KIND: &str = "flow";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowNetConfig {
    /// Number of resolution levels (downsamplings = depth − 1).
    pub depth: usize,
    pub base_width: usize,
    pub max_width: usize,
    /// The flow head output is multiplied by this many pixels.
    pub flow_scale: f64,
}

impl Default for FlowNetConfig {
    fn default() -> Self {
        Self {
            depth: 5,
            base_width: 32,
            max_width: 256,
            flow_scale: 8.0,
        }
    }
}

impl FlowNetConfig {
    fn width(&self, level: usize) -> usize {
        (self.base_width << level).min(self.max_width)
    }

    fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.depth > 8 || self.base_width == 0 || !(self.flow_scale > 0.0) {
            return Err(Error::invalid("invalid flow network configuration"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct UNet {
    enc: Vec<(ConvBlock, ConvBlock)>,
    dec: Vec<(ConvBlock, ConvBlock)>,
    flow_head: Conv2d,
    vis_head: Conv2d,
    flow_scale: f64,
}

impl UNet {
    fn new(cfg: &FlowNetConfig, in_c: usize, vb: VarBuilder) -> candle_core::Result<Self> {
        let leak = Some(0.2);
        let mut enc = Vec::new();
        let mut prev = in_c;
        for l in 0..cfg.depth {
            let c = cfg.width(l);
            let v = vb.pp(format!("enc{l}"));
            enc.push((
                ConvBlock::new(prev, c, 3, 1, false, leak, v.pp("a"))?,
                ConvBlock::new(c, c, 3, 1, false, leak, v.pp("b"))?,
            ));
            prev = c;
        }
        let mut dec = Vec::new();
        for l in (0..cfg.depth - 1).rev() {
            let c = cfg.width(l);
            let v = vb.pp(format!("dec{l}"));
            dec.push((
                ConvBlock::new(cfg.width(l + 1) + c, c, 3, 1, false, leak, v.pp("a"))?,
                ConvBlock::new(c, c, 3, 1, false, leak, v.pp("b"))?,
            ));
        }
        Ok(Self {
            enc,
            dec,
            flow_head: conv(cfg.base_width, 2, 3, 1, 1, vb.pp("flow_head"))?,
            vis_head: conv(cfg.base_width, 3, 3, 1, 1, vb.pp("vis_head"))?,
            flow_scale: cfg.flow_scale,
        })
    }

    fn forward(&self, x: &Tensor) -> candle_core::Result<(Tensor, Tensor)> {
        let levels = self.enc.len();
        let (x, (h, w)) = pad_to_multiple(x, 1 << (levels - 1))?;
        let mut skips = Vec::with_capacity(levels);
        let mut y = x;
        for (l, (a, b)) in self.enc.iter().enumerate() {
            if l > 0 {
                y = y.avg_pool2d(2)?;
            }
            y = b.forward(&a.forward(&y)?)?;
            skips.push(y.clone());
        }
        skips.pop();
        for (a, b) in &self.dec {
            let skip = skips.pop().expect("one skip per decoder level");
            y = Tensor::cat(&[&upsample2(&y)?, &skip], 1)?;
            y = b.forward(&a.forward(&y)?)?;
        }
        let flow = (self.flow_head.forward(&y)? * self.flow_scale)?;
        let vis = self.vis_head.forward(&y)?;
        Ok((flow.narrow(2, 0, h)?.narrow(3, 0, w)?, vis.narrow(2, 0, h)?.narrow(3, 0, w)?))
    }
}

/// U-Net mapping (appearance pose, target pose) to a target→source flow and
/// 3-class visibility logits at the input resolution.
#[derive(Debug, Clone)]
pub struct FlowRegressor {
    pub config: FlowNetConfig,
    store: ParamStore,
    net: UNet,
}

/// One prediction.
#[derive(Debug, Clone)]
pub struct FlowPrediction {
    pub flow: FlowField,
    pub logits: FeatureMap,
    pub visibility: VisibilityMap,
}

impl FlowRegressor {
    pub fn new(config: FlowNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let store = ParamStore::new(seed);
        let net = UNet::new(&config, 2 * POSE_CHANNELS, store.var_builder())?;
        Ok(Self { config, store, net })
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    /// Batched forward on `(B, 2·POSE_CHANNELS, H, W)`; returns flow
    /// `(B, 2, H, W)` and logits `(B, 3, H, W)`.
    pub fn forward(&self, input: &Tensor) -> candle_core::Result<(Tensor, Tensor)> {
        self.net.forward(input)
    }

    pub(crate) fn input_tensor(appearance: &[&PoseMap], target: &[&PoseMap]) -> Result<Tensor> {
        let a = pose_maps_to_tensor(appearance)?;
        let t = pose_maps_to_tensor(target)?;
        if a.dims() != t.dims() {
            return Err(Error::invalid("appearance and target pose maps differ in shape"));
        }
        Ok(Tensor::cat(&[&a, &t], 1)?)
    }

    pub fn predict(&self, appearance: &PoseMap, target: &PoseMap) -> Result<FlowPrediction> {
        let (h, w) = (target.height, target.width);
        let (flow, logits) = self.forward(&Self::input_tensor(&[appearance], &[target])?)?;
        let f = flow.squeeze(0)?.permute((1, 2, 0))?.flatten_all()?.to_vec1::<f32>()?;
        let l = logits.squeeze(0)?.flatten_all()?.to_vec1::<f32>()?;
        let logits = FeatureMap::new(3, h, w, l)?;
        let labels = (0..h * w)
            .map(|p| {
                let v = [logits.data[p], logits.data[h * w + p], logits.data[2 * h * w + p]];
                (0..3).fold(0, |best, c| if v[c] > v[best] { c } else { best }) as u8
            })
            .collect();
        Ok(FlowPrediction {
            flow: FlowField::new(h, w, f)?,
            logits,
            visibility: VisibilityMap::new(h, w, labels)?,
        })
    }

    /// Writes the weights with `stage_config` as the sidecar; its `net`
    /// must describe this network.
    pub fn save(&self, stem: &Path, stage_config: &super::FlowStageConfig) -> Result<()> {
        if stage_config.net != self.config {
            return Err(Error::invalid("stage config does not describe this network"));
        }
        save_checkpoint(stem, CHECKPOINT_KIND, stage_config, &[("flow", &self.store)])?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let config: super::FlowStageConfig = crate::nn::read_sidecar(stem, CHECKPOINT_KIND)?;
        let me = Self::new(config.net, 0)?;
        load_into(stem, "flow", &me.store)?;
        Ok(me)
    }
}
