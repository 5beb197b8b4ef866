use std::collections::HashMap;
use std::path::{Path, PathBuf};

use candle_core::{DType, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::region::Frame;

/// Maps a batch of RGB images `(B, 3, H, W)` in `[0, 1]` to a fixed list of
/// feature maps. Implementations hold frozen weights, so gradients flow to
/// the images only.
pub trait PerceptualExtractor: Send + Sync {
    fn num_layers(&self) -> usize;
    fn features(&self, images: &Tensor) -> candle_core::Result<Vec<Tensor>>;

    /// Equal per-layer weights summing to one.
    fn default_weights(&self) -> Vec<f64> {
        vec![1.0 / self.num_layers() as f64; self.num_layers()]
    }
}

/// The image itself as a single feature layer.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityExtractor;

impl PerceptualExtractor for IdentityExtractor {
    fn num_layers(&self) -> usize {
        1
    }

    fn features(&self, images: &Tensor) -> candle_core::Result<Vec<Tensor>> {
        Ok(vec![images.clone()])
    }
}

struct FrozenConv {
    weight: Tensor,
    bias: Tensor,
    stride: usize,
    padding: usize,
}

impl FrozenConv {
    fn forward(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        super::conv2d(x, &self.weight, Some(&self.bias), self.stride, self.padding)
    }
}

/// Fixed random-weight conv stack; each ReLU output is a feature layer.
/// Used where pretrained weights are unavailable.
pub struct RandomExtractor {
    convs: Vec<FrozenConv>,
}

impl RandomExtractor {
    pub fn new(seed: u64, widths: &[usize]) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut in_c = 3;
        let mut convs = Vec::with_capacity(widths.len());
        for (i, &out_c) in widths.iter().enumerate() {
            let fan_in = (in_c * 9) as f64;
            let bound = (6.0 / fan_in).sqrt();
            let w: Vec<f32> = (0..out_c * in_c * 9)
                .map(|_| rng.gen_range(-bound..bound) as f32)
                .collect();
            let b: Vec<f32> = (0..out_c).map(|_| rng.gen_range(-0.1..0.1) as f32).collect();
            convs.push(FrozenConv {
                weight: Tensor::from_vec(w, (out_c, in_c, 3, 3), &super::device())?,
                bias: Tensor::from_vec(b, out_c, &super::device())?,
                stride: if i == 0 { 1 } else { 2 },
                padding: 1,
            });
            in_c = out_c;
        }
        Ok(Self { convs })
    }

    /// Three layers of widths 8, 16, 32.
    pub fn small(seed: u64) -> Self {
        Self::new(seed, &[8, 16, 32]).expect("static shapes")
    }
}

impl PerceptualExtractor for RandomExtractor {
    fn num_layers(&self) -> usize {
        self.convs.len()
    }

    fn features(&self, images: &Tensor) -> candle_core::Result<Vec<Tensor>> {
        let mut x = images.clone();
        let mut out = Vec::with_capacity(self.convs.len());
        for c in &self.convs {
            x = c.forward(&x)?.relu()?;
            out.push(x.clone());
        }
        Ok(out)
    }
}

/// Indices of the convolutions in torchvision's `vgg19().features`.
const VGG19_CONVS: [usize; 16] = [0, 2, 5, 7, 10, 12, 14, 16, 19, 21, 23, 25, 28, 30, 32, 34];
const VGG19_POOLS: [usize; 5] = [4, 9, 18, 27, 36];
/// relu1_1, relu2_1, relu3_1, relu4_1, relu5_1.
pub const VGG19_DEFAULT_TAPS: [usize; 5] = [1, 6, 11, 20, 29];

/// VGG19 feature extractor over weights stored with torchvision naming
/// (`features.{i}.weight` / `features.{i}.bias`). Channel widths are read
/// from the tensors themselves. Inputs are normalised with ImageNet statistics.
pub struct Vgg19Extractor {
    convs: HashMap<usize, FrozenConv>,
    taps: Vec<usize>,
    mean: Tensor,
    std: Tensor,
}

impl Vgg19Extractor {
    pub fn load(path: &Path, taps: &[usize]) -> Result<Self> {
        let tensors = candle_core::safetensors::load(path, &super::device())?;
        Self::from_tensors(&tensors, taps)
    }

    pub fn from_tensors(tensors: &HashMap<String, Tensor>, taps: &[usize]) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::invalid("at least one VGG tap is required"));
        }
        let last = *taps.iter().max().unwrap();
        if last > VGG19_POOLS[4] {
            return Err(Error::invalid(format!("VGG19 has no feature layer {last}")));
        }
        let mut convs = HashMap::new();
        for &idx in VGG19_CONVS.iter().filter(|&&i| i < last) {
            let fetch = |suffix: &str| {
                tensors
                    .get(&format!("features.{idx}.{suffix}"))
                    .cloned()
                    .ok_or_else(|| Error::Format {
                        what: "VGG19 weights",
                        detail: format!("missing features.{idx}.{suffix}"),
                    })
            };
            convs.insert(
                idx,
                FrozenConv {
                    weight: fetch("weight")?.to_dtype(DType::F32)?,
                    bias: fetch("bias")?.to_dtype(DType::F32)?,
                    stride: 1,
                    padding: 1,
                },
            );
        }
        let dev = super::device();
        Ok(Self {
            convs,
            taps: taps.to_vec(),
            mean: Tensor::from_vec(vec![0.485f32, 0.456, 0.406], (1, 3, 1, 1), &dev)?,
            std: Tensor::from_vec(vec![0.229f32, 0.224, 0.225], (1, 3, 1, 1), &dev)?,
        })
    }
}

impl PerceptualExtractor for Vgg19Extractor {
    fn num_layers(&self) -> usize {
        self.taps.len()
    }

    fn features(&self, images: &Tensor) -> candle_core::Result<Vec<Tensor>> {
        let last = *self.taps.iter().max().unwrap();
        let mut x = images.broadcast_sub(&self.mean)?.broadcast_div(&self.std)?;
        let mut by_index = HashMap::new();
        for idx in 0..=last {
            x = if let Some(c) = self.convs.get(&idx) {
                c.forward(&x)?
            } else if VGG19_POOLS.contains(&idx) {
                x.max_pool2d(2)?
            } else {
                x.relu()?
            };
            if self.taps.contains(&idx) {
                by_index.insert(idx, x.clone());
            }
        }
        Ok(self.taps.iter().map(|t| by_index[t].clone()).collect())
    }
}

/// Serializable choice of extractor for training configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerceptualSpec {
    Random { seed: u64, widths: Vec<usize> },
    Identity,
    Vgg19 { weights: PathBuf, taps: Vec<usize> },
}

impl Default for PerceptualSpec {
    fn default() -> Self {
        PerceptualSpec::Random {
            seed: 0,
            widths: vec![8, 16, 32],
        }
    }
}

impl PerceptualSpec {
    pub fn build(&self) -> Result<Box<dyn PerceptualExtractor>> {
        Ok(match self {
            PerceptualSpec::Random { seed, widths } => Box::new(RandomExtractor::new(*seed, widths)?),
            PerceptualSpec::Identity => Box::new(IdentityExtractor),
            PerceptualSpec::Vgg19 { weights, taps } => Box::new(Vgg19Extractor::load(weights, taps)?),
        })
    }
}

/// `Σ λ_i · mean |φ_i(a) − φ_i(b)|` on tensors; differentiable in `a` and `b`.
pub fn perceptual_loss_tensor(
    ext: &dyn PerceptualExtractor,
    a: &Tensor,
    b: &Tensor,
    weights: &[f64],
) -> Result<Tensor> {
    if weights.len() != ext.num_layers() {
        return Err(Error::invalid(format!(
            "{} layer weights for an extractor with {} layers",
            weights.len(),
            ext.num_layers()
        )));
    }
    if weights.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::invalid("perceptual layer weights must be non-negative"));
    }
    let fa = ext.features(a)?;
    let fb = ext.features(b)?;
    let mut total = Tensor::zeros((), a.dtype(), a.device())?;
    for ((x, y), &w) in fa.iter().zip(&fb).zip(weights) {
        total = (total + ((x - y)?.abs()?.mean_all()? * w)?)?;
    }
    Ok(total)
}

/// Frame-level perceptual distance.
pub fn perceptual_loss(ext: &dyn PerceptualExtractor, a: &Frame, b: &Frame, weights: &[f64]) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::invalid("perceptual loss inputs differ in size"));
    }
    let ta = super::frames_to_tensor(&[a])?;
    let tb = super::frames_to_tensor(&[b])?;
    Ok(perceptual_loss_tensor(ext, &ta, &tb, weights)?.to_scalar::<f32>()? as f64)
}
