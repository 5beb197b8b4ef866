use candle_core::{Module, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{conv, instance_norm, Conv2d, ParamStore};

/// Lower clip inside the adversarial logs.
pub const ADV_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscConfig {
    pub base_width: usize,
    pub max_width: usize,
    /// Stride-2 layers before the two stride-1 layers.
    pub downsamples: usize,
}

impl Default for DiscConfig {
    fn default() -> Self {
        Self {
            base_width: 64,
            max_width: 512,
            downsamples: 3,
        }
    }
}

/// Patch classifier over `(appearance, one-hot parsing, foreground)`.
/// Scores are in `(0, 1)`, one per receptive-field patch.
#[derive(Debug, Clone)]
pub struct PatchDiscriminator {
    pub config: DiscConfig,
    store: ParamStore,
    layers: Vec<Conv2d>,
}

impl PatchDiscriminator {
    pub fn new(config: DiscConfig, num_classes: usize, seed: u64) -> Result<Self> {
        if config.base_width == 0 || config.downsamples == 0 {
            return Err(Error::invalid("invalid discriminator configuration"));
        }
        let store = ParamStore::new(seed);
        let vb = store.var_builder();
        let width = |i: usize| (config.base_width << i).min(config.max_width);
        let mut layers = Vec::new();
        let mut prev = 3 + num_classes + 3;
        for i in 0..config.downsamples {
            layers.push(conv(prev, width(i), 4, 2, 1, vb.pp(format!("l{i}")))?);
            prev = width(i);
        }
        let n = config.downsamples;
        layers.push(conv(prev, width(n), 4, 1, 1, vb.pp(format!("l{n}")))?);
        layers.push(conv(width(n), 1, 4, 1, 1, vb.pp("score"))?);
        Ok(Self { config, store, layers })
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    /// Score grid `(B, 1, h, w)` for the conditioning tuple.
    pub fn scores(&self, appearance: &Tensor, parsing: &Tensor, foreground: &Tensor) -> candle_core::Result<Tensor> {
        let mut x = Tensor::cat(&[appearance, parsing, foreground], 1)?;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(&x)?;
            if i < last {
                if i > 0 {
                    x = instance_norm(&x)?;
                }
                x = candle_nn::ops::leaky_relu(&x, 0.2)?;
            }
        }
        candle_nn::ops::sigmoid(&x)
    }
}

/// Discriminator and (non-saturating) generator objectives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdversarialLosses {
    pub d_loss: f64,
    pub g_loss: f64,
}

fn mean_log(v: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    v.iter().map(|&x| f(x).max(ADV_EPS).ln()).sum::<f64>() / v.len() as f64
}

/// `d = −mean log D(real) − mean log(1 − D(fake))`, `g = −mean log D(fake)`.
pub fn adversarial_losses(real: &[f64], fake: &[f64]) -> Result<AdversarialLosses> {
    if real.is_empty() || fake.is_empty() {
        return Err(Error::invalid("adversarial losses need at least one score per side"));
    }
    Ok(AdversarialLosses {
        d_loss: -mean_log(real, |x| x) - mean_log(fake, |x| 1.0 - x),
        g_loss: -mean_log(fake, |x| x),
    })
}

/// Tensor form of [`adversarial_losses`]; returns `(d_loss, g_loss)`.
pub fn adversarial_losses_tensor(real: &Tensor, fake: &Tensor) -> candle_core::Result<(Tensor, Tensor)> {
    let log_clip = |t: &Tensor| t.clamp(ADV_EPS, f64::MAX)?.log();
    let d = (log_clip(real)?.mean_all()?.neg()? - log_clip(&fake.affine(-1.0, 1.0)?)?.mean_all()?)?;
    let g = log_clip(fake)?.mean_all()?.neg()?;
    Ok((d, g))
}
