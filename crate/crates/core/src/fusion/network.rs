use std::path::Path;

use candle_core::{Module, Tensor};
use candle_nn::VarBuilder;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{conv, frames_to_tensor, pad_to_multiple, tensor_to_masks, upsample2, Conv2d, ConvBlock, ParamStore, ResBlock};
use crate::region::{composite, Frame, Mask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionNetConfig {
    pub base_width: usize,
    pub res_blocks: usize,
    /// Integer factor by which the inputs are average-pooled before the
    /// network; the mask is upsampled back by the same factor.
    pub downscale: usize,
}

impl Default for FusionNetConfig {
    fn default() -> Self {
        Self {
            base_width: 32,
            res_blocks: 3,
            downscale: 1,
        }
    }
}

#[derive(Debug, Clone)]
struct MaskNet {
    head: ConvBlock,
    down: ConvBlock,
    blocks: Vec<ResBlock>,
    up: ConvBlock,
    out: Conv2d,
}

impl MaskNet {
    fn new(cfg: &FusionNetConfig, vb: VarBuilder) -> candle_core::Result<Self> {
        let c = cfg.base_width;
        Ok(Self {
            head: ConvBlock::new(9, c, 7, 1, true, None, vb.pp("head"))?,
            down: ConvBlock::new(c, 2 * c, 3, 2, true, None, vb.pp("down"))?,
            blocks: (0..cfg.res_blocks)
                .map(|i| ResBlock::new(2 * c, vb.pp(format!("res{i}"))))
                .collect::<candle_core::Result<_>>()?,
            up: ConvBlock::new(2 * c, c, 3, 1, true, None, vb.pp("up"))?,
            out: conv(c, 1, 3, 1, 1, vb.pp("out"))?,
        })
    }
}

/// Integer nearest-neighbour upsampling built from broadcasts.
fn upsample_by(x: &Tensor, f: usize) -> candle_core::Result<Tensor> {
    if f == 1 {
        return Ok(x.clone());
    }
    let (b, c, h, w) = x.dims4()?;
    x.reshape((b, c, h, 1, w, 1))?
        .broadcast_as((b, c, h, f, w, f))?
        .reshape((b, c, h * f, w * f))
}

/// ResNet-style mask predictor over `(background, foreground, previous output)`.
#[derive(Debug, Clone)]
pub struct FusionNetwork {
    pub config: FusionNetConfig,
    store: ParamStore,
    net: MaskNet,
}

pub(crate) const CHECKPOINT_KIND: &str = "fusion";

impl FusionNetwork {
    pub fn new(config: FusionNetConfig, seed: u64) -> Result<Self> {
        if config.base_width == 0 || config.downscale == 0 {
            return Err(Error::invalid("invalid fusion network configuration"));
        }
        let store = ParamStore::new(seed);
        let net = MaskNet::new(&config, store.var_builder())?;
        Ok(Self { config, store, net })
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    /// Mask `(B, 1, H, W)` in `[0, 1]` from three `(B, 3, H, W)` tensors.
    pub fn mask(&self, bg: &Tensor, fg: &Tensor, prev: &Tensor) -> candle_core::Result<Tensor> {
        let x = Tensor::cat(&[bg, fg, prev], 1)?;
        let (_, _, h, w) = x.dims4()?;
        let f = self.config.downscale;
        let (x, _) = pad_to_multiple(&x, 2 * f)?;
        let x = if f > 1 { x.avg_pool2d(f)? } else { x };
        let n = &self.net;
        let mut y = n.down.forward(&n.head.forward(&x)?)?;
        for b in &n.blocks {
            y = b.forward(&y)?;
        }
        let y = n.out.forward(&n.up.forward(&upsample2(&y)?)?)?;
        let m = candle_nn::ops::sigmoid(&upsample_by(&y, f)?)?;
        m.narrow(2, 0, h)?.narrow(3, 0, w)
    }

    /// `fg · m + bg · (1 − m)` on tensors.
    pub(crate) fn blend(fg: &Tensor, bg: &Tensor, m: &Tensor) -> candle_core::Result<Tensor> {
        let inv = m.affine(-1.0, 1.0)?;
        fg.broadcast_mul(m)? + bg.broadcast_mul(&inv)?
    }

    pub fn save(&self, stem: &Path, stage_config: &impl Serialize) -> Result<()> {
        crate::nn::save_checkpoint(stem, CHECKPOINT_KIND, stage_config, &[("fusion", &self.store)])?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let cfg: super::FusionStageConfig = crate::nn::read_sidecar(stem, CHECKPOINT_KIND)?;
        let me = Self::new(cfg.network, 0)?;
        crate::nn::load_into(stem, "fusion", &me.store)?;
        Ok(me)
    }
}

/// One fusion step: predicts the mask and composites `fg` over `bg`.
pub fn fuse_step(net: &FusionNetwork, bg: &Frame, fg: &Frame, prev: &Frame) -> Result<(Frame, Mask)> {
    if !bg.same_shape(fg) || !bg.same_shape(prev) {
        return Err(Error::invalid("fusion inputs differ in size"));
    }
    let m = net.mask(&frames_to_tensor(&[bg])?, &frames_to_tensor(&[fg])?, &frames_to_tensor(&[prev])?)?;
    let mask = tensor_to_masks(&m)?.remove(0);
    let frame = composite(fg, bg, &mask)?;
    Ok((frame, mask))
}

/// Frame 0 is the direct overlay of `fgs[0]` through `bootstrap`; every later
/// frame is [`fuse_step`] on the previous output.
pub fn fuse_sequence(net: &FusionNetwork, bg: &Frame, fgs: &[Frame], bootstrap: &Mask) -> Result<Vec<Frame>> {
    if fgs.len() < 2 {
        return Err(Error::invalid("fusion needs at least two frames"));
    }
    let mut out = Vec::with_capacity(fgs.len());
    out.push(composite(&fgs[0], bg, bootstrap)?);
    for fg in &fgs[1..] {
        let (frame, _) = fuse_step(net, bg, fg, out.last().unwrap())?;
        out.push(frame);
    }
    Ok(out)
}
