use candle_core::{Result, Tensor};

use crate::error::{Error, Result as CrateResult};
use crate::pose::PoseMap;
use crate::region::{Frame, Mask, ParsingMap};

fn check_same<T>(items: &[&T], dims: impl Fn(&T) -> (usize, usize)) -> CrateResult<(usize, usize)> {
    let first = items
        .first()
        .map(|t| dims(t))
        .ok_or_else(|| Error::invalid("empty batch"))?;
    if items.iter().any(|t| dims(t) != first) {
        return Err(Error::invalid("batch items differ in resolution"));
    }
    Ok(first)
}

/// `(B, 3, H, W)` tensor from HWC frames.
pub fn frames_to_tensor(frames: &[&Frame]) -> CrateResult<Tensor> {
    let (h, w) = check_same(frames, |f| (f.height, f.width))?;
    let mut data: Vec<f32> = Vec::with_capacity(frames.len() * 3 * h * w);
    for f in frames {
        for c in 0..3 {
            data.extend(f.data.iter().skip(c).step_by(3));
        }
    }
    Ok(Tensor::from_vec(data, (frames.len(), 3, h, w), &super::device())?)
}

/// Inverse of [`frames_to_tensor`], clamping into `[0, 1]`.
pub fn tensor_to_frames(t: &Tensor) -> Result<Vec<Frame>> {
    let (b, c, h, w) = t.dims4()?;
    if c != 3 {
        candle_core::bail!("expected 3 channels, got {c}");
    }
    let flat = t.to_dtype(candle_core::DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
    let plane = h * w;
    Ok((0..b)
        .map(|i| {
            let base = i * 3 * plane;
            let mut data = vec![0f32; plane * 3];
            for p in 0..plane {
                for ch in 0..3 {
                    data[p * 3 + ch] = flat[base + ch * plane + p].clamp(0.0, 1.0);
                }
            }
            Frame {
                height: h,
                width: w,
                data,
            }
        })
        .collect())
}

/// `(B, C, H, W)` one-hot encoding.
pub fn one_hot_tensor(maps: &[&ParsingMap]) -> CrateResult<Tensor> {
    let (h, w) = check_same(maps, |m| (m.height, m.width))?;
    let c = maps[0].num_classes;
    if maps.iter().any(|m| m.num_classes != c) {
        return Err(Error::invalid("batch items differ in class count"));
    }
    let data: Vec<f32> = maps.iter().flat_map(|m| m.one_hot()).collect();
    Ok(Tensor::from_vec(data, (maps.len(), c, h, w), &super::device())?)
}

pub fn pose_maps_to_tensor(maps: &[&PoseMap]) -> CrateResult<Tensor> {
    let (h, w) = check_same(maps, |m| (m.height, m.width))?;
    let data: Vec<f32> = maps.iter().flat_map(|m| m.data.iter().copied()).collect();
    Ok(Tensor::from_vec(
        data,
        (maps.len(), PoseMap::CHANNELS, h, w),
        &super::device(),
    )?)
}

pub fn masks_to_tensor(masks: &[&Mask]) -> CrateResult<Tensor> {
    let (h, w) = check_same(masks, |m| (m.height, m.width))?;
    let data: Vec<f32> = masks.iter().flat_map(|m| m.data.iter().copied()).collect();
    Ok(Tensor::from_vec(data, (masks.len(), 1, h, w), &super::device())?)
}

pub fn tensor_to_masks(t: &Tensor) -> Result<Vec<Mask>> {
    let (b, c, h, w) = t.dims4()?;
    if c != 1 {
        candle_core::bail!("expected 1 channel, got {c}");
    }
    let flat = t.to_dtype(candle_core::DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
    Ok(flat
        .chunks_exact(h * w)
        .take(b)
        .map(|d| Mask {
            height: h,
            width: w,
            data: d.to_vec(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_tensor_round_trip() {
        let f = Frame::from_fn(3, 4, |y, x| [x as f32 * 0.1, y as f32 * 0.2, 0.5]);
        let t = frames_to_tensor(&[&f, &f]).unwrap();
        assert_eq!(t.dims4().unwrap(), (2, 3, 3, 4));
        let back = tensor_to_frames(&t).unwrap();
        assert_eq!(back[1], f);
    }

    #[test]
    fn mixed_sizes_rejected() {
        let a = Frame::zeros(2, 2);
        let b = Frame::zeros(3, 2);
        assert!(frames_to_tensor(&[&a, &b]).is_err());
        assert!(frames_to_tensor(&[]).is_err());
    }
}
