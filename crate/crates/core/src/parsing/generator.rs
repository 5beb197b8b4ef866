use std::path::Path;

use candle_core::{Module, Tensor};
use candle_nn::VarBuilder;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FeatureMap;
use crate::nn::{conv, Conv2d, one_hot_tensor, pad_to_multiple, pose_maps_to_tensor, upsample2, ConvBlock, ParamStore, ResBlock};
use crate::pose::{PoseMap, POSE_CHANNELS};
use crate::region::ParsingMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParsingNetConfig {
    pub num_classes: usize,
    pub base_width: usize,
    pub res_blocks: usize,
}

impl Default for ParsingNetConfig {
    fn default() -> Self {
        Self {
            num_classes: 20,
            base_width: 32,
            res_blocks: 9,
        }
    }
}

#[derive(Debug, Clone)]
struct ResNetGenerator {
    head: ConvBlock,
    down: [ConvBlock; 2],
    blocks: Vec<ResBlock>,
    up: [ConvBlock; 2],
    out: Conv2d,
}

impl ResNetGenerator {
    fn new(in_c: usize, out_c: usize, ngf: usize, res_blocks: usize, vb: VarBuilder) -> candle_core::Result<Self> {
        Ok(Self {
            head: ConvBlock::new(in_c, ngf, 7, 1, true, None, vb.pp("head"))?,
            down: [
                ConvBlock::new(ngf, ngf * 2, 3, 2, true, None, vb.pp("down0"))?,
                ConvBlock::new(ngf * 2, ngf * 4, 3, 2, true, None, vb.pp("down1"))?,
            ],
            blocks: (0..res_blocks)
                .map(|i| ResBlock::new(ngf * 4, vb.pp(format!("res{i}"))))
                .collect::<candle_core::Result<_>>()?,
            up: [
                ConvBlock::new(ngf * 4, ngf * 2, 3, 1, true, None, vb.pp("up0"))?,
                ConvBlock::new(ngf * 2, ngf, 3, 1, true, None, vb.pp("up1"))?,
            ],
            out: conv(ngf, out_c, 7, 1, 3, vb.pp("out"))?,
        })
    }

    fn forward(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        let (x, (h, w)) = pad_to_multiple(x, 4)?;
        let mut y = self.head.forward(&x)?;
        for d in &self.down {
            y = d.forward(&y)?;
        }
        for b in &self.blocks {
            y = b.forward(&y)?;
        }
        for u in &self.up {
            y = u.forward(&upsample2(&y)?)?;
        }
        self.out.forward(&y)?.narrow(2, 0, h)?.narrow(3, 0, w)
    }
}

/// ResNet generator mapping (one-hot appearance parsing, target pose map) to
/// per-class logits of the target parsing.
#[derive(Debug, Clone)]
pub struct ParsingGenerator {
    pub config: ParsingNetConfig,
    store: ParamStore,
    net: ResNetGenerator,
}

impl ParsingGenerator {
    pub fn new(config: ParsingNetConfig, seed: u64) -> Result<Self> {
        if config.num_classes < 2 || config.num_classes > 256 || config.base_width == 0 {
            return Err(Error::invalid("invalid parsing generator configuration"));
        }
        let store = ParamStore::new(seed);
        let net = ResNetGenerator::new(
            config.num_classes + POSE_CHANNELS,
            config.num_classes,
            config.base_width,
            config.res_blocks,
            store.var_builder(),
        )?;
        Ok(Self { config, store, net })
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    /// Logits `(B, C, H, W)` for an input `(B, C + POSE_CHANNELS, H, W)`.
    pub fn forward(&self, input: &Tensor) -> candle_core::Result<Tensor> {
        self.net.forward(input)
    }

    pub(crate) fn input_tensor(&self, appearance: &[&ParsingMap], poses: &[&PoseMap]) -> Result<Tensor> {
        if appearance.iter().any(|p| p.num_classes != self.config.num_classes) {
            return Err(Error::invalid(format!(
                "generator expects {} parsing classes",
                self.config.num_classes
            )));
        }
        let a = one_hot_tensor(appearance)?;
        let p = pose_maps_to_tensor(poses)?;
        if a.dims()[2..] != p.dims()[2..] {
            return Err(Error::invalid("parsing and pose map resolutions differ"));
        }
        Ok(Tensor::cat(&[&a, &p], 1)?)
    }

    /// Pre-argmax logits for one input pair.
    pub fn logits(&self, appearance: &ParsingMap, pose: &PoseMap) -> Result<FeatureMap> {
        let x = self.input_tensor(&[appearance], &[pose])?;
        let y = self.forward(&x)?.squeeze(0)?;
        let (c, h, w) = y.dims3()?;
        FeatureMap::new(c, h, w, y.flatten_all()?.to_vec1::<f32>()?)
    }

    pub fn save(&self, stem: &Path, stage_config: &impl Serialize) -> Result<()> {
        crate::nn::save_checkpoint(stem, CHECKPOINT_KIND, stage_config, &[("parsing", &self.store)])?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let cfg: super::ParsingStageConfig = crate::nn::read_sidecar(stem, CHECKPOINT_KIND)?;
        let me = Self::new(cfg.net_config(), 0)?;
        crate::nn::load_into(stem, "parsing", &me.store)?;
        Ok(me)
    }
}

pub(crate) const CHECKPOINT_KIND: &str = "parsing";

/// Argmax over classes; ties go to the lowest class index.
pub(crate) fn argmax_labels(logits: &FeatureMap) -> Vec<u8> {
    let plane = logits.height * logits.width;
    (0..plane)
        .map(|p| {
            let mut best = 0;
            for c in 1..logits.channels {
                if logits.data[c * plane + p] > logits.data[best * plane + p] {
                    best = c;
                }
            }
            best as u8
        })
        .collect()
}

/// Target parsing for `pose` given the appearance parsing.
pub fn generate_parsing(gen: &ParsingGenerator, appearance: &ParsingMap, pose: &PoseMap) -> Result<ParsingMap> {
    let logits = gen.logits(appearance, pose)?;
    ParsingMap::new(logits.height, logits.width, logits.channels, argmax_labels(&logits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::dance_pose;
    use crate::pose::{rasterize_pose, RasterOptions};

    fn small(c: usize) -> ParsingGenerator {
        ParsingGenerator::new(
            ParsingNetConfig {
                num_classes: c,
                base_width: 4,
                res_blocks: 2,
            },
            3,
        )
        .unwrap()
    }

    fn inputs(c: usize, h: usize, w: usize) -> (ParsingMap, PoseMap) {
        let labels = (0..h * w).map(|i| ((i / 5) % c) as u8).collect();
        let pm = ParsingMap::new(h, w, c, labels).unwrap();
        let pose = rasterize_pose(&dance_pose(w as f64 / 2.0, h as f64 / 2.0, h as f64 * 0.8, 0.2), h, w, &RasterOptions::for_working_size(h)).unwrap();
        (pm, pose)
    }

    #[test]
    fn zero_output_layer_gives_class_zero() {
        let g = small(4);
        let w = g.store().get("out.weight").unwrap();
        g.store().set("out.weight", &w.zeros_like().unwrap()).unwrap();
        let b = g.store().get("out.bias").unwrap();
        g.store().set("out.bias", &b.zeros_like().unwrap()).unwrap();
        let (pm, pose) = inputs(4, 13, 10);
        let out = generate_parsing(&g, &pm, &pose).unwrap();
        assert_eq!((out.height, out.width), (13, 10));
        assert!(out.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn labels_in_range_and_channel_mismatch_errors() {
        let g = small(5);
        let (pm, pose) = inputs(5, 12, 12);
        assert!(generate_parsing(&g, &pm, &pose).unwrap().labels.iter().all(|&l| l < 5));
        let (bad, _) = inputs(3, 12, 12);
        assert!(generate_parsing(&g, &bad, &pose).is_err());
    }

    #[test]
    fn relabeling_equivariance() {
        let c = 3;
        let g = small(c);
        let (pm, pose) = inputs(c, 12, 12);
        let before = g.logits(&pm, &pose).unwrap();
        // Relabel 0→1→2→0 in the input and permute the head's input channels to match.
        let perm = [1usize, 2, 0];
        let relabeled = ParsingMap::new(12, 12, c, pm.labels.iter().map(|&l| perm[l as usize] as u8).collect()).unwrap();
        let w = g.store().get("head.weight").unwrap().as_tensor().clone();
        let mut parts: Vec<Tensor> = (0..w.dims()[1]).map(|i| w.narrow(1, i, 1).unwrap()).collect();
        let orig = parts.clone();
        for (old, &new) in perm.iter().enumerate() {
            parts[new] = orig[old].clone();
        }
        g.store().set("head.weight", &Tensor::cat(&parts, 1).unwrap()).unwrap();
        let after = g.logits(&relabeled, &pose).unwrap();
        for (a, b) in before.data.iter().zip(&after.data) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
    }
}
