use candle_core::{Module, Tensor};
use candle_nn::VarBuilder;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::warp::rescale_flow_to;
use crate::flow::{FlowField, VisibilityMap, WarpPlan};
use crate::nn::{conv, frames_to_tensor, one_hot_tensor, tensor_to_frames, upsample2, Conv2d, ConvBlock, ParamStore, ResBlock};
use crate::region::{Frame, ParsingMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DualPathConfig {
    pub num_classes: usize,
    pub base_width: usize,
    pub max_width: usize,
    /// Encoder scales; each one after the first halves the resolution.
    pub levels: usize,
    pub bottleneck_blocks: usize,
}

impl Default for DualPathConfig {
    fn default() -> Self {
        Self {
            num_classes: 20,
            base_width: 32,
            max_width: 256,
            levels: 4,
            bottleneck_blocks: 2,
        }
    }
}

impl DualPathConfig {
    fn width(&self, level: usize) -> usize {
        (self.base_width << level).min(self.max_width)
    }

    /// Input sides must be multiples of this.
    pub fn stride(&self) -> usize {
        1 << (self.levels - 1)
    }
}

/// Per-scale warp plans and visible/invisible masks for one batch.
#[derive(Debug, Clone)]
pub struct WarpConditioning {
    plans: Vec<WarpPlan>,
    visible: Vec<Tensor>,
    invisible: Vec<Tensor>,
}

impl WarpConditioning {
    pub fn new(flows: &[&FlowField], vis: &[&VisibilityMap], height: usize, width: usize, levels: usize) -> Result<Self> {
        if flows.len() != vis.len() || flows.is_empty() {
            return Err(Error::invalid("need one visibility map per flow"));
        }
        if flows
            .iter()
            .zip(vis)
            .any(|(f, v)| (f.height, f.width, v.height, v.width) != (height, width, height, width))
        {
            return Err(Error::invalid("flow/visibility resolution does not match the foreground"));
        }
        let dev = crate::nn::device();
        let (mut plans, mut visible, mut invisible) = (Vec::new(), Vec::new(), Vec::new());
        for l in 0..levels {
            let (h, w) = (height >> l, width >> l);
            let factor = 1.0 / (1u32 << l) as f64;
            let scaled = flows
                .iter()
                .map(|f| rescale_flow_to(f, h, w, factor))
                .collect::<Result<Vec<_>>>()?;
            plans.push(WarpPlan::new(&scaled.iter().collect::<Vec<_>>(), h, w, 0.0)?);
            let (mut vm, mut im) = (Vec::with_capacity(vis.len() * h * w), Vec::with_capacity(vis.len() * h * w));
            for v in vis {
                let small = v.resize_nearest(h, w);
                vm.extend(small.labels.iter().map(|&l| (l == VisibilityMap::VISIBLE) as u8 as f32));
                im.extend(small.labels.iter().map(|&l| (l == VisibilityMap::INVISIBLE) as u8 as f32));
            }
            visible.push(Tensor::from_vec(vm, (vis.len(), 1, h, w), &dev)?);
            invisible.push(Tensor::from_vec(im, (vis.len(), 1, h, w), &dev)?);
        }
        Ok(Self {
            plans,
            visible,
            invisible,
        })
    }

    /// Zero flow and an all-visible map: features pass through unwarped.
    pub fn identity(batch: usize, height: usize, width: usize, levels: usize) -> Result<Self> {
        let flow = FlowField::zeros(height, width);
        let vis = VisibilityMap::filled(height, width, VisibilityMap::VISIBLE);
        Self::new(&vec![&flow; batch], &vec![&vis; batch], height, width, levels)
    }
}

/// Warps appearance features, splits them by visibility and merges the two
/// parts through a two-convolution residual path. Channel count is kept.
#[derive(Debug, Clone)]
pub struct WarpBlock {
    conv1: Conv2d,
    conv2: Conv2d,
}

impl WarpBlock {
    pub fn new(channels: usize, vb: VarBuilder) -> candle_core::Result<Self> {
        Ok(Self {
            conv1: conv(2 * channels, channels, 3, 1, 1, vb.pp("conv1"))?,
            conv2: conv(channels, channels, 3, 1, 1, vb.pp("conv2"))?,
        })
    }

    pub fn forward(&self, feat: &Tensor, plan: &WarpPlan, visible: &Tensor, invisible: &Tensor) -> candle_core::Result<Tensor> {
        let warped = plan.apply(feat)?;
        let vis = warped.broadcast_mul(visible)?;
        let invis = warped.broadcast_mul(invisible)?;
        let both = Tensor::cat(&[&vis, &invis], 1)?;
        let residual = self.conv2.forward(&self.conv1.forward(&both)?.relu()?)?;
        (vis + invis)? + residual
    }
}

#[derive(Debug, Clone)]
struct Encoder(Vec<ConvBlock>);

impl Encoder {
    fn new(cfg: &DualPathConfig, in_c: usize, vb: VarBuilder) -> candle_core::Result<Self> {
        let mut prev = in_c;
        let mut layers = Vec::new();
        for l in 0..cfg.levels {
            let c = cfg.width(l);
            let stride = if l == 0 { 1 } else { 2 };
            layers.push(ConvBlock::new(prev, c, 3, stride, true, None, vb.pp(format!("l{l}")))?);
            prev = c;
        }
        Ok(Self(layers))
    }

    fn forward(&self, x: &Tensor) -> candle_core::Result<Vec<Tensor>> {
        let mut out = Vec::with_capacity(self.0.len());
        let mut y = x.clone();
        for layer in &self.0 {
            y = layer.forward(&y)?;
            out.push(y.clone());
        }
        Ok(out)
    }
}

/// Dual-path U-Net: a parsing encoder, an appearance encoder whose every
/// scale passes through a [`WarpBlock`], and a decoder with skip connections
/// from both paths. Output is RGB in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct DualPathGenerator {
    pub config: DualPathConfig,
    store: ParamStore,
    parsing_enc: Encoder,
    appearance_enc: Encoder,
    warps: Vec<WarpBlock>,
    bottom: ConvBlock,
    blocks: Vec<ResBlock>,
    up: Vec<ConvBlock>,
    out: Conv2d,
}

impl DualPathGenerator {
    pub fn new(config: DualPathConfig, seed: u64) -> Result<Self> {
        if config.levels == 0 || config.levels > 6 || config.base_width == 0 || config.num_classes < 2 {
            return Err(Error::invalid("invalid dual-path generator configuration"));
        }
        let store = ParamStore::new(seed);
        let vb = store.var_builder();
        let cfg = &config;
        let top = cfg.levels - 1;
        let parsing_enc = Encoder::new(cfg, cfg.num_classes, vb.pp("parsing_enc"))?;
        let appearance_enc = Encoder::new(cfg, 3, vb.pp("appearance_enc"))?;
        let warps = (0..cfg.levels)
            .map(|l| WarpBlock::new(cfg.width(l), vb.pp(format!("warp{l}"))))
            .collect::<candle_core::Result<_>>()?;
        let bottom = ConvBlock::new(2 * cfg.width(top), cfg.width(top), 3, 1, true, None, vb.pp("bottom"))?;
        let blocks = (0..cfg.bottleneck_blocks)
            .map(|i| ResBlock::new(cfg.width(top), vb.pp(format!("res{i}"))))
            .collect::<candle_core::Result<_>>()?;
        let up = (0..top)
            .rev()
            .map(|l| ConvBlock::new(cfg.width(l + 1) + 2 * cfg.width(l), cfg.width(l), 3, 1, true, None, vb.pp(format!("up{l}"))))
            .collect::<candle_core::Result<_>>()?;
        let out = conv(cfg.width(0), 3, 3, 1, 1, vb.pp("out"))?;
        Ok(Self {
            config,
            store,
            parsing_enc,
            appearance_enc,
            warps,
            bottom,
            blocks,
            up,
            out,
        })
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub(crate) fn check_size(&self, height: usize, width: usize) -> Result<()> {
        let s = self.config.stride();
        if height % s != 0 || width % s != 0 {
            return Err(Error::invalid(format!(
                "foreground resolution {height}x{width} is not a multiple of {s}"
            )));
        }
        Ok(())
    }

    /// `appearance` `(B, 3, H, W)`, `parsing` one-hot `(B, C, H, W)`.
    pub fn forward(&self, appearance: &Tensor, parsing: &Tensor, warp: &WarpConditioning) -> candle_core::Result<Tensor> {
        let p = self.parsing_enc.forward(parsing)?;
        let a = self.appearance_enc.forward(appearance)?;
        let warped = a
            .iter()
            .enumerate()
            .map(|(l, f)| self.warps[l].forward(f, &warp.plans[l], &warp.visible[l], &warp.invisible[l]))
            .collect::<candle_core::Result<Vec<_>>>()?;
        let top = self.config.levels - 1;
        let mut y = self.bottom.forward(&Tensor::cat(&[&p[top], &warped[top]], 1)?)?;
        for b in &self.blocks {
            y = b.forward(&y)?;
        }
        for (i, l) in (0..top).rev().enumerate() {
            y = Tensor::cat(&[&upsample2(&y)?, &p[l], &warped[l]], 1)?;
            y = self.up[i].forward(&y)?;
        }
        candle_nn::ops::sigmoid(&self.out.forward(&y)?)
    }

    pub(crate) fn inputs(&self, appearance: &[&Frame], parsing: &[&ParsingMap]) -> Result<(Tensor, Tensor)> {
        if parsing.iter().any(|p| p.num_classes != self.config.num_classes) {
            return Err(Error::invalid(format!(
                "generator expects {} parsing classes",
                self.config.num_classes
            )));
        }
        if appearance
            .iter()
            .zip(parsing)
            .any(|(a, p)| (a.height, a.width) != (p.height, p.width))
        {
            return Err(Error::invalid("appearance and parsing resolutions differ"));
        }
        Ok((frames_to_tensor(appearance)?, one_hot_tensor(parsing)?))
    }
}

/// Target foreground from the appearance foreground, the target parsing and
/// the flow/visibility pair.
pub fn generate_foreground(
    gen: &DualPathGenerator,
    appearance: &Frame,
    parsing: &ParsingMap,
    flow: &FlowField,
    vis: &VisibilityMap,
) -> Result<Frame> {
    let (h, w) = (appearance.height, appearance.width);
    gen.check_size(h, w)?;
    let (a, p) = gen.inputs(&[appearance], &[parsing])?;
    let cond = WarpConditioning::new(&[flow], &[vis], h, w, gen.config.levels)?;
    let y = gen.forward(&a, &p, &cond)?;
    Ok(tensor_to_frames(&y)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DualPathGenerator {
        DualPathGenerator::new(
            DualPathConfig {
                num_classes: 4,
                base_width: 4,
                max_width: 8,
                levels: 3,
                bottleneck_blocks: 1,
            },
            2,
        )
        .unwrap()
    }

    fn inputs(h: usize, w: usize) -> (Frame, ParsingMap) {
        let f = Frame::from_fn(h, w, |y, x| [(x as f32 / w as f32), (y as f32 / h as f32), 0.5]);
        let p = ParsingMap::new(h, w, 4, (0..h * w).map(|i| (i % 4) as u8).collect()).unwrap();
        (f, p)
    }

    #[test]
    fn output_is_bounded_and_sized() {
        let g = small();
        let (f, p) = inputs(16, 12);
        let flow = FlowField::constant(16, 12, 1.5, -0.5);
        let vis = VisibilityMap::new(16, 12, (0..192).map(|i| (i % 3) as u8).collect()).unwrap();
        let out = generate_foreground(&g, &f, &p, &flow, &vis).unwrap();
        assert_eq!((out.height, out.width), (16, 12));
        assert!(out.data.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn indivisible_size_errors() {
        let g = small();
        let (f, p) = inputs(10, 12);
        let vis = VisibilityMap::filled(10, 12, 1);
        assert!(generate_foreground(&g, &f, &p, &FlowField::zeros(10, 12), &vis).is_err());
    }

    #[test]
    fn identity_warp_block_passes_features_through() {
        let store = ParamStore::new(4);
        let block = WarpBlock::new(3, store.var_builder()).unwrap();
        for name in ["conv2.weight", "conv2.bias"] {
            let v = store.get(name).unwrap();
            store.set(name, &v.zeros_like().unwrap()).unwrap();
        }
        let cond = WarpConditioning::identity(1, 6, 5, 1).unwrap();
        let x = Tensor::arange(0f32, 90.0, &crate::nn::device()).unwrap().reshape((1, 3, 6, 5)).unwrap();
        let y = block.forward(&x, &cond.plans[0], &cond.visible[0], &cond.invisible[0]).unwrap();
        let diff = (y - &x).unwrap().abs().unwrap().max_all().unwrap().to_scalar::<f32>().unwrap();
        assert_eq!(diff, 0.0);
    }

    #[test]
    fn visibility_masks_partition_foreground() {
        let labels: Vec<u8> = (0..64).map(|i| ((i * 7) % 3) as u8).collect();
        let vis = VisibilityMap::new(8, 8, labels.clone()).unwrap();
        let cond = WarpConditioning::new(&[&FlowField::zeros(8, 8)], &[&vis], 8, 8, 2).unwrap();
        let v = cond.visible[0].flatten_all().unwrap().to_vec1::<f32>().unwrap();
        let i = cond.invisible[0].flatten_all().unwrap().to_vec1::<f32>().unwrap();
        for ((a, b), l) in v.iter().zip(&i).zip(&labels) {
            assert_eq!(a * b, 0.0);
            assert_eq!(a + b, (*l != 0) as u8 as f32);
        }
    }
}
