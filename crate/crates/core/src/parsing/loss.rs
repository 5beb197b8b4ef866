use candle_core::Tensor;

use crate::error::{Error, Result};
use crate::flow::FeatureMap;
use crate::region::ParsingMap;

/// Lower clip applied to probabilities inside the log.
pub const PROB_EPS: f64 = 1e-8;

/// Raw (unnormalised) sums over pixels and classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParsingLosses {
    pub l1: f64,
    pub par: f64,
}

/// `l1 = Σ |x_p − x̂_p|` and `par = −Σ x_p log max(x̂_p, ε)` where `x_p` is
/// the one-hot target and `x̂_p` the predicted class probabilities
/// (`C × H × W`).
pub fn parsing_losses(probs: &FeatureMap, target: &ParsingMap) -> Result<ParsingLosses> {
    if (probs.channels, probs.height, probs.width) != (target.num_classes, target.height, target.width) {
        return Err(Error::invalid(format!(
            "prediction is {}x{}x{} but target is {}x{}x{}",
            probs.channels, probs.height, probs.width, target.num_classes, target.height, target.width
        )));
    }
    let plane = target.height * target.width;
    let (mut l1, mut par) = (0f64, 0f64);
    for (p, &label) in target.labels.iter().enumerate() {
        for c in 0..probs.channels {
            let x = probs.data[c * plane + p] as f64;
            let t = if c == label as usize { 1.0 } else { 0.0 };
            l1 += (t - x).abs();
            if t > 0.0 {
                par -= x.clamp(PROB_EPS, 1.0).ln();
            }
        }
    }
    Ok(ParsingLosses { l1, par })
}

/// Differentiable raw sums over a batch: `probs` and `one_hot` are
/// `(B, C, H, W)`.
pub fn parsing_losses_tensor(probs: &Tensor, one_hot: &Tensor) -> candle_core::Result<(Tensor, Tensor)> {
    let one_hot = one_hot.to_dtype(probs.dtype())?;
    let l1 = (probs - &one_hot)?.abs()?.sum_all()?;
    let logp = probs.clamp(PROB_EPS, 1.0)?.log()?;
    let par = (one_hot * logp)?.sum_all()?.neg()?;
    Ok((l1, par))
}
