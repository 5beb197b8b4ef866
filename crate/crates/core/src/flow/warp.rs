use candle_core::Tensor;

use super::{FeatureMap, FlowField};
use crate::error::{Error, Result};
use crate::region::resample::resize_interleaved;
use crate::region::Interp;
use crate::region::Frame;

/// How far (in pixels) a sample may fall outside the pixel-centre grid and
/// still be treated as in bounds.
pub const WARP_BOUNDS_TOLERANCE: f64 = 1e-3;

/// Bilinear corner indices and weights for one sample position, or `None`
/// when the position lies outside the image.
fn corners(x: f64, y: f64, h: usize, w: usize) -> Option<[(usize, f32); 4]> {
    let t = WARP_BOUNDS_TOLERANCE;
    if !(x >= -t && y >= -t && x <= (w - 1) as f64 + t && y <= (h - 1) as f64 + t) {
        return None;
    }
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = (x - x0 as f64) as f32;
    let fy = (y - y0 as f64) as f32;
    Some([
        (y0 * w + x0, (1.0 - fx) * (1.0 - fy)),
        (y0 * w + x1, fx * (1.0 - fy)),
        (y1 * w + x0, (1.0 - fx) * fy),
        (y1 * w + x1, fx * fy),
    ])
}

/// `output(p) = bilinear(feat, p + flow(p))`; out-of-bounds samples take `fill`.
pub fn warp_by_flow(feat: &FeatureMap, flow: &FlowField, fill: f32) -> Result<FeatureMap> {
    if feat.height != flow.height || feat.width != flow.width {
        return Err(Error::invalid(format!(
            "flow is {}x{} but features are {}x{}",
            flow.height, flow.width, feat.height, feat.width
        )));
    }
    let (h, w) = (feat.height, feat.width);
    let plane = h * w;
    let mut out = vec![fill; feat.channels * plane];
    for y in 0..h {
        for x in 0..w {
            let (du, dv) = flow.at(y, x);
            let Some(cs) = corners(x as f64 + du as f64, y as f64 + dv as f64, h, w) else {
                continue;
            };
            for c in 0..feat.channels {
                let src = &feat.data[c * plane..(c + 1) * plane];
                out[c * plane + y * w + x] = cs.iter().map(|&(i, wt)| src[i] * wt).sum();
            }
        }
    }
    FeatureMap::new(feat.channels, h, w, out)
}

/// [`warp_by_flow`] on an RGB frame.
pub fn warp_frame(frame: &Frame, flow: &FlowField, fill: f32) -> Result<Frame> {
    let plane = frame.height * frame.width;
    let mut chw = vec![0f32; plane * 3];
    for p in 0..plane {
        for c in 0..3 {
            chw[c * plane + p] = frame.data[p * 3 + c];
        }
    }
    let warped = warp_by_flow(&FeatureMap::new(3, frame.height, frame.width, chw)?, flow, fill)?;
    let mut data = vec![0f32; plane * 3];
    for p in 0..plane {
        for c in 0..3 {
            data[p * 3 + c] = warped.data[c * plane + p];
        }
    }
    Frame::new(frame.height, frame.width, data)
}

/// Resizes a flow field by `factor` (bilinear) and scales its displacements
/// by the same factor.
pub fn rescale_flow(flow: &FlowField, factor: f64) -> Result<FlowField> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(Error::invalid(format!("flow rescale factor must be positive, got {factor}")));
    }
    let h = ((flow.height as f64 * factor).round() as usize).max(1);
    let w = ((flow.width as f64 * factor).round() as usize).max(1);
    rescale_flow_to(flow, h, w, factor)
}

pub(crate) fn rescale_flow_to(flow: &FlowField, h: usize, w: usize, factor: f64) -> Result<FlowField> {
    let data = if h == flow.height && w == flow.width {
        flow.data.clone()
    } else {
        resize_interleaved(&flow.data, flow.height, flow.width, 2, h, w, Interp::Bilinear)
    };
    FlowField::new(h, w, data.into_iter().map(|v| (v as f64 * factor) as f32).collect())
}

/// Precomputed gather for warping a batch of `(B, C, H, W)` tensors by one
/// flow per batch item. The flow itself is not differentiated through;
/// gradients reach the warped features.
#[derive(Debug, Clone)]
pub struct WarpPlan {
    batch: usize,
    height: usize,
    width: usize,
    indices: [Tensor; 4],
    weights: [Tensor; 4],
    fill: Option<Tensor>,
}

impl WarpPlan {
    pub fn new(flows: &[&FlowField], height: usize, width: usize, fill: f32) -> Result<Self> {
        if flows.is_empty() {
            return Err(Error::invalid("warp plan needs at least one flow"));
        }
        let plane = height * width;
        let n = flows.len() * plane;
        let mut idx = [(); 4].map(|_| vec![0u32; n]);
        let mut wts = [(); 4].map(|_| vec![0f32; n]);
        let mut miss = vec![0f32; n];
        for (b, flow) in flows.iter().enumerate() {
            if flow.height != height || flow.width != width {
                return Err(Error::invalid("flow resolution does not match warp plan"));
            }
            for y in 0..height {
                for x in 0..width {
                    let o = b * plane + y * width + x;
                    let (du, dv) = flow.at(y, x);
                    match corners(x as f64 + du as f64, y as f64 + dv as f64, height, width) {
                        Some(cs) => {
                            for (k, (i, wt)) in cs.into_iter().enumerate() {
                                idx[k][o] = (b * plane + i) as u32;
                                wts[k][o] = wt;
                            }
                        }
                        None => miss[o] = 1.0,
                    }
                }
            }
        }
        let dev = crate::nn::device();
        let shape = (flows.len(), 1, height, width);
        let to_idx = |v: Vec<u32>| Tensor::from_vec(v, n, &dev);
        let to_w = |v: Vec<f32>| Tensor::from_vec(v, shape, &dev);
        let [i0, i1, i2, i3] = idx;
        let [w0, w1, w2, w3] = wts;
        let fill = if fill != 0.0 {
            Some((to_w(miss)? * fill as f64)?)
        } else {
            None
        };
        Ok(Self {
            batch: flows.len(),
            height,
            width,
            indices: [to_idx(i0)?, to_idx(i1)?, to_idx(i2)?, to_idx(i3)?],
            weights: [to_w(w0)?, to_w(w1)?, to_w(w2)?, to_w(w3)?],
            fill,
        })
    }

    /// Identity warp (zero flow everywhere).
    pub fn identity(batch: usize, height: usize, width: usize) -> Result<Self> {
        let zero = FlowField::zeros(height, width);
        Self::new(&vec![&zero; batch], height, width, 0.0)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn apply(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        let (b, c, h, w) = x.dims4()?;
        if (b, h, w) != (self.batch, self.height, self.width) {
            candle_core::bail!(
                "warp plan is for {}x{}x{}, got {b}x{h}x{w}",
                self.batch,
                self.height,
                self.width
            );
        }
        let flat = x.permute((1, 0, 2, 3))?.reshape((c, b * h * w))?;
        let mut acc: Option<Tensor> = None;
        for (idx, wt) in self.indices.iter().zip(&self.weights) {
            let g = flat
                .index_select(idx, 1)?
                .reshape((c, b, h, w))?
                .permute((1, 0, 2, 3))?
                .broadcast_mul(wt)?;
            acc = Some(match acc {
                Some(a) => (a + g)?,
                None => g,
            });
        }
        let out = acc.expect("four corners");
        match &self.fill {
            Some(f) => out.broadcast_add(f),
            None => Ok(out),
        }
    }
}
