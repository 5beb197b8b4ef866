use candle_core::{DType, Tensor};
use candle_nn::ops::log_softmax;

use super::{FeatureMap, FlowField, VisibilityMap};
use crate::error::{Error, Result};

/// End-point error and visibility cross-entropy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowLosses {
    pub epe: f64,
    pub ce: f64,
}

impl FlowLosses {
    pub fn total(&self) -> f64 {
        self.epe + self.ce
    }
}

/// EPE over ground-truth visible pixels (0 when there are none) and
/// 3-class cross-entropy averaged over all pixels. `logits` is `3 × H × W`.
pub fn flow_losses(
    pred_flow: &FlowField,
    logits: &FeatureMap,
    gt_flow: &FlowField,
    gt_vis: &VisibilityMap,
) -> Result<FlowLosses> {
    let (h, w) = (gt_vis.height, gt_vis.width);
    if (pred_flow.height, pred_flow.width) != (h, w)
        || (gt_flow.height, gt_flow.width) != (h, w)
        || (logits.height, logits.width) != (h, w)
    {
        return Err(Error::invalid("flow loss inputs differ in resolution"));
    }
    if logits.channels != 3 {
        return Err(Error::invalid("visibility logits need 3 channels"));
    }
    let (mut epe, mut n, mut ce) = (0f64, 0usize, 0f64);
    for y in 0..h {
        for x in 0..w {
            let label = gt_vis.at(y, x);
            if label == VisibilityMap::VISIBLE {
                let (pu, pv) = pred_flow.at(y, x);
                let (gu, gv) = gt_flow.at(y, x);
                epe += ((pu - gu) as f64).hypot((pv - gv) as f64);
                n += 1;
            }
            let l: Vec<f64> = (0..3).map(|c| logits.at(c, y, x) as f64).collect();
            let m = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + l.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            ce += lse - l[label as usize];
        }
    }
    Ok(FlowLosses {
        epe: if n == 0 { 0.0 } else { epe / n as f64 },
        ce: ce / (h * w) as f64,
    })
}

/// Ground-truth tensors for a batch: flow `(B, 2, H, W)` and one-hot
/// visibility `(B, 3, H, W)`.
pub(crate) fn flow_targets(flows: &[&FlowField], vis: &[&VisibilityMap]) -> Result<(Tensor, Tensor)> {
    let (h, w) = (vis[0].height, vis[0].width);
    let plane = h * w;
    let mut f: Vec<f32> = Vec::with_capacity(flows.len() * 2 * plane);
    let mut oh = vec![0f32; vis.len() * 3 * plane];
    for (b, (fl, v)) in flows.iter().zip(vis).enumerate() {
        if (fl.height, fl.width, v.height, v.width) != (h, w, h, w) {
            return Err(Error::invalid("flow targets differ in resolution"));
        }
        for c in 0..2 {
            f.extend(fl.data.iter().skip(c).step_by(2));
        }
        for (p, &l) in v.labels.iter().enumerate() {
            oh[(b * 3 + l as usize) * plane + p] = 1.0;
        }
    }
    let dev = crate::nn::device();
    Ok((
        Tensor::from_vec(f, (flows.len(), 2, h, w), &dev)?,
        Tensor::from_vec(oh, (vis.len(), 3, h, w), &dev)?,
    ))
}

/// Differentiable counterpart of [`flow_losses`]. `vis_onehot` is the
/// one-hot ground truth; its channel 1 selects the EPE pixels.
pub fn flow_losses_tensor(
    pred_flow: &Tensor,
    logits: &Tensor,
    gt_flow: &Tensor,
    vis_onehot: &Tensor,
) -> candle_core::Result<(Tensor, Tensor)> {
    let (b, _, h, w) = vis_onehot.dims4()?;
    let dtype = pred_flow.dtype();
    let visible = vis_onehot.narrow(1, VisibilityMap::VISIBLE as usize, 1)?.to_dtype(dtype)?;
    let d = (pred_flow - gt_flow.to_dtype(dtype)?)?;
    let norm = (d.sqr()?.sum_keepdim(1)? + 1e-12)?.sqrt()?;
    let count = visible.sum_all()?.to_dtype(DType::F64)?.to_scalar::<f64>()?;
    let epe = ((norm * &visible)?.sum_all()? / count.max(1.0))?;
    let logp = log_softmax(logits, 1)?;
    let ce = ((logp * vis_onehot.to_dtype(logits.dtype())?)?.sum_all()?.neg()? / (b * h * w) as f64)?;
    Ok((epe, ce))
}
