//! Inflated-Inception (I3D) clip embedder evaluated from a safetensors file
//! using the parameter names of the common PyTorch port
//! (`Conv3d_1a_7x7.conv3d.weight`, `Mixed_3b.b1b.bn.running_mean`, ...).

use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Tensor, D};
use serde::{Deserialize, Serialize};

use super::ClipEmbedder;
use crate::error::{Error, Result};
use crate::nn::{conv2d, device, frames_to_tensor};
use crate::region::{Frame, Interp};

const BN_EPS: f64 = 1e-3;

/// Layer whose output is returned as the embedding.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum I3dEndpoint {
    /// Global average of the last mixed block (1024-d).
    Pool,
    /// Class logits of the pooled features.
    #[default]
    Logits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct I3dOptions {
    pub endpoint: I3dEndpoint,
    /// Square spatial size frames are resized to.
    pub input_size: usize,
}

impl Default for I3dOptions {
    fn default() -> Self {
        Self {
            endpoint: I3dEndpoint::Logits,
            input_size: 224,
        }
    }
}

/// Branch widths of one Inception block: `[b0, b1a, b1b, b2a, b2b, b3b]`.
const MIXED: [(&str, usize, [usize; 6]); 9] = [
    ("Mixed_3b", 192, [64, 96, 128, 16, 32, 32]),
    ("Mixed_3c", 256, [128, 128, 192, 32, 96, 64]),
    ("Mixed_4b", 480, [192, 96, 208, 16, 48, 64]),
    ("Mixed_4c", 512, [160, 112, 224, 24, 64, 64]),
    ("Mixed_4d", 512, [128, 128, 256, 24, 64, 64]),
    ("Mixed_4e", 512, [112, 144, 288, 32, 64, 64]),
    ("Mixed_4f", 528, [256, 160, 320, 32, 128, 128]),
    ("Mixed_5b", 832, [256, 160, 320, 32, 128, 128]),
    ("Mixed_5c", 832, [384, 192, 384, 48, 128, 128]),
];

const FEATURES: usize = 1024;

/// `(name, in, out, kernel)` of every batch-normalised unit.
fn units() -> Vec<(String, usize, usize, usize)> {
    let mut u = vec![
        ("Conv3d_1a_7x7".to_string(), 3, 64, 7),
        ("Conv3d_2b_1x1".to_string(), 64, 64, 1),
        ("Conv3d_2c_3x3".to_string(), 64, 192, 3),
    ];
    for (name, c, w) in MIXED {
        u.push((format!("{name}.b0"), c, w[0], 1));
        u.push((format!("{name}.b1a"), c, w[1], 1));
        u.push((format!("{name}.b1b"), w[1], w[2], 3));
        u.push((format!("{name}.b2a"), c, w[3], 1));
        u.push((format!("{name}.b2b"), w[3], w[4], 3));
        u.push((format!("{name}.b3b"), c, w[5], 1));
    }
    u
}

/// TF-style "same" padding `(front, back)` for one axis.
fn same_pad(size: usize, k: usize, stride: usize) -> (usize, usize) {
    let pad = if size % stride == 0 {
        k.saturating_sub(stride)
    } else {
        k.saturating_sub(size % stride)
    };
    (pad / 2, pad - pad / 2)
}

/// Zero-pads dims 1, 3, 4 of an `(N, T, C, H, W)` tensor for the given
/// kernel and strides; returns the padded tensor.
fn pad_same(x: &Tensor, k: [usize; 3], s: [usize; 3]) -> candle_core::Result<Tensor> {
    let dims = x.dims();
    let mut y = x.clone();
    for (axis, (&kk, &ss)) in [1, 3, 4].iter().zip(k.iter().zip(&s)) {
        let (a, b) = same_pad(dims[*axis], kk, ss);
        if a + b > 0 {
            y = y.pad_with_zeros(*axis, a, b)?;
        }
    }
    Ok(y)
}

/// Frames `t·stride + tap` for every output step along dim 1.
fn temporal_taps(x: &Tensor, k: usize, stride: usize) -> candle_core::Result<Vec<Tensor>> {
    let t = x.dim(1)?;
    let out = (t - k) / stride + 1;
    (0..k)
        .map(|tap| {
            let idx: Vec<u32> = (0..out).map(|o| (o * stride + tap) as u32).collect();
            x.index_select(&Tensor::new(idx, x.device())?, 1)
        })
        .collect()
}

struct Unit {
    /// Per temporal tap, `(O, C, kh, kw)`.
    taps: Vec<Tensor>,
    scale: Tensor,
    shift: Tensor,
    k: usize,
}

impl Unit {
    fn load(w: &HashMap<String, Tensor>, name: &str, cin: usize, cout: usize, k: usize) -> Result<Self> {
        let get = |suffix: &str, shape: &[usize]| -> Result<Tensor> {
            let key = format!("{name}.{suffix}");
            let t = w.get(&key).ok_or_else(|| Error::Format {
                what: "I3D weights",
                detail: format!("missing tensor {key}"),
            })?;
            if t.dims() != shape {
                return Err(Error::Format {
                    what: "I3D weights",
                    detail: format!("{key} has shape {:?}, expected {shape:?}", t.dims()),
                });
            }
            Ok(t.to_dtype(DType::F32)?)
        };
        let weight = get("conv3d.weight", &[cout, cin, k, k, k])?;
        let gamma = get("bn.weight", &[cout])?;
        let beta = get("bn.bias", &[cout])?;
        let mean = get("bn.running_mean", &[cout])?;
        let var = get("bn.running_var", &[cout])?;
        let scale = (gamma / (var + BN_EPS)?.sqrt()?)?;
        let shift = (beta - (&mean * &scale)?)?;
        Ok(Self {
            taps: (0..k).map(|i| weight.narrow(2, i, 1)?.squeeze(2)?.contiguous()).collect::<candle_core::Result<_>>()?,
            scale: scale.reshape((1, 1, cout, 1, 1))?,
            shift: shift.reshape((1, 1, cout, 1, 1))?,
            k,
        })
    }

    /// Conv3d (no bias) + batch norm + ReLU on `(N, T, C, H, W)`.
    fn forward(&self, x: &Tensor, stride: usize) -> candle_core::Result<Tensor> {
        let k = self.k;
        let x = pad_same(x, [k; 3], [stride; 3])?;
        let mut acc: Option<Tensor> = None;
        for (frames, w) in temporal_taps(&x, k, stride)?.iter().zip(&self.taps) {
            let (n, t, c, h, wd) = frames.dims5()?;
            let y = conv2d(&frames.reshape((n * t, c, h, wd))?, w, None, stride, 0)?;
            let (_, o, oh, ow) = y.dims4()?;
            let y = y.reshape((n, t, o, oh, ow))?;
            acc = Some(match acc {
                Some(a) => (a + y)?,
                None => y,
            });
        }
        acc.unwrap().broadcast_mul(&self.scale)?.broadcast_add(&self.shift)?.relu()
    }
}

/// Max pooling with "same" zero padding on post-ReLU activations.
fn max_pool(x: &Tensor, k: [usize; 3], s: [usize; 3]) -> candle_core::Result<Tensor> {
    let x = pad_same(x, k, s)?;
    let taps = temporal_taps(&x, k[0], s[0])?;
    let mut m = taps[0].clone();
    for t in &taps[1..] {
        m = m.maximum(t)?;
    }
    let (n, t, c, h, w) = m.dims5()?;
    let y = m.reshape((n * t, c, h, w))?.max_pool2d_with_stride((k[1], k[2]), (s[1], s[2]))?;
    let (_, _, oh, ow) = y.dims4()?;
    y.reshape((n, t, c, oh, ow))
}

/// Pretrained I3D evaluated on CPU.
pub struct I3dEmbedder {
    units: HashMap<String, Unit>,
    logits: (Tensor, Tensor),
    options: I3dOptions,
}

impl std::fmt::Debug for I3dEmbedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("I3dEmbedder").field("options", &self.options).finish_non_exhaustive()
    }
}

impl I3dEmbedder {
    /// Every tensor the loader reads, with its shape, for `classes` logits.
    pub fn parameter_shapes(classes: usize) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (name, cin, cout, k) in units() {
            out.push((format!("{name}.conv3d.weight"), vec![cout, cin, k, k, k]));
            for p in ["bn.weight", "bn.bias", "bn.running_mean", "bn.running_var"] {
                out.push((format!("{name}.{p}"), vec![cout]));
            }
        }
        out.push(("logits.conv3d.weight".into(), vec![classes, FEATURES, 1, 1, 1]));
        out.push(("logits.conv3d.bias".into(), vec![classes]));
        out
    }

    pub fn from_tensors(w: &HashMap<String, Tensor>, options: I3dOptions) -> Result<Self> {
        if options.input_size == 0 {
            return Err(Error::invalid("I3D input size must be positive"));
        }
        let mut units_map = HashMap::new();
        for (name, cin, cout, k) in units() {
            units_map.insert(name.clone(), Unit::load(w, &name, cin, cout, k)?);
        }
        let missing = |key: &str| Error::Format {
            what: "I3D weights",
            detail: format!("missing tensor {key}"),
        };
        let lw = w.get("logits.conv3d.weight").ok_or_else(|| missing("logits.conv3d.weight"))?;
        let lb = w.get("logits.conv3d.bias").ok_or_else(|| missing("logits.conv3d.bias"))?;
        let classes = lb.dim(0)?;
        if lw.dims() != [classes, FEATURES, 1, 1, 1] {
            return Err(Error::Format {
                what: "I3D weights",
                detail: format!("logits weight has shape {:?}", lw.dims()),
            });
        }
        let logits = (lw.to_dtype(DType::F32)?.reshape((classes, FEATURES))?.t()?.contiguous()?, lb.to_dtype(DType::F32)?);
        Ok(Self {
            units: units_map,
            logits,
            options,
        })
    }

    pub fn load(path: &Path, options: I3dOptions) -> Result<Self> {
        if !path.exists() {
            return Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "I3D weights not found")));
        }
        let w = candle_core::safetensors::load(path, &device())?;
        Self::from_tensors(&w, options)
    }

    fn unit(&self, name: &str, x: &Tensor, stride: usize) -> candle_core::Result<Tensor> {
        self.units[name].forward(x, stride)
    }

    fn mixed(&self, name: &str, x: &Tensor) -> candle_core::Result<Tensor> {
        let b0 = self.unit(&format!("{name}.b0"), x, 1)?;
        let b1 = self.unit(&format!("{name}.b1b"), &self.unit(&format!("{name}.b1a"), x, 1)?, 1)?;
        let b2 = self.unit(&format!("{name}.b2b"), &self.unit(&format!("{name}.b2a"), x, 1)?, 1)?;
        let b3 = self.unit(&format!("{name}.b3b"), &max_pool(x, [3; 3], [1; 3])?, 1)?;
        Tensor::cat(&[b0, b1, b2, b3], 2)
    }

    /// `(N, T, 3, H, W)` in `[-1, 1]` to `(N, dim)`.
    pub fn forward(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        let mut y = self.unit("Conv3d_1a_7x7", x, 2)?;
        y = max_pool(&y, [1, 3, 3], [1, 2, 2])?;
        y = self.unit("Conv3d_2c_3x3", &self.unit("Conv3d_2b_1x1", &y, 1)?, 1)?;
        y = max_pool(&y, [1, 3, 3], [1, 2, 2])?;
        for (i, (name, _, _)) in MIXED.iter().enumerate() {
            y = self.mixed(name, &y)?;
            if i == 1 {
                y = max_pool(&y, [3; 3], [2; 3])?;
            } else if i == 6 {
                y = max_pool(&y, [2; 3], [2; 3])?;
            }
        }
        let pooled = y.mean(D::Minus1)?.mean(D::Minus1)?.mean(1)?;
        match self.options.endpoint {
            I3dEndpoint::Pool => Ok(pooled),
            I3dEndpoint::Logits => pooled.matmul(&self.logits.0)?.broadcast_add(&self.logits.1),
        }
    }
}

impl ClipEmbedder for I3dEmbedder {
    fn dim(&self) -> usize {
        match self.options.endpoint {
            I3dEndpoint::Pool => FEATURES,
            I3dEndpoint::Logits => self.logits.1.dims1().unwrap_or(0),
        }
    }

    fn embed(&self, clip: &[Frame]) -> Result<Vec<f64>> {
        if clip.is_empty() {
            return Err(Error::invalid("cannot embed an empty clip"));
        }
        let s = self.options.input_size;
        let frames: Vec<Frame> = clip.iter().map(|f| f.resize(s, s, Interp::Bilinear)).collect();
        let x = frames_to_tensor(&frames.iter().collect::<Vec<_>>())?.affine(2.0, -1.0)?.unsqueeze(0)?;
        let y = self.forward(&x)?.squeeze(0)?.to_vec1::<f32>()?;
        Ok(y.into_iter().map(f64::from).collect())
    }
}
