use candle_core::{Module, Result, Tensor, D};
use candle_nn::VarBuilder;

use super::conv::Conv2d;

/// `k × k` convolution with explicit stride and padding.
pub fn conv(in_c: usize, out_c: usize, k: usize, stride: usize, padding: usize, vb: VarBuilder) -> Result<Conv2d> {
    Conv2d::new(in_c, out_c, k, stride, padding, vb)
}

/// Affine-free instance normalisation over the spatial dims of `(B, C, H, W)`.
pub fn instance_norm(x: &Tensor) -> Result<Tensor> {
    let (b, c, h, w) = x.dims4()?;
    let flat = x.reshape((b, c, h * w))?;
    let mean = flat.mean_keepdim(D::Minus1)?;
    let centred = flat.broadcast_sub(&mean)?;
    let var = centred.sqr()?.mean_keepdim(D::Minus1)?;
    centred
        .broadcast_div(&(var + 1e-5)?.sqrt()?)?
        .reshape((b, c, h, w))
}

/// Nearest-neighbour ×2 upsampling built from broadcasts so its gradient
/// accumulates correctly when the input has several consumers.
pub fn upsample2(x: &Tensor) -> Result<Tensor> {
    let (b, c, h, w) = x.dims4()?;
    x.reshape((b, c, h, 1, w, 1))?
        .broadcast_as((b, c, h, 2, w, 2))?
        .reshape((b, c, h * 2, w * 2))
}

/// Zero-pads the bottom/right edges so both spatial dims divide `multiple`.
/// Returns the padded tensor and the original `(h, w)`.
pub fn pad_to_multiple(x: &Tensor, multiple: usize) -> Result<(Tensor, (usize, usize))> {
    let (_, _, h, w) = x.dims4()?;
    let ph = h.div_ceil(multiple) * multiple - h;
    let pw = w.div_ceil(multiple) * multiple - w;
    let mut y = x.clone();
    if ph > 0 {
        y = y.pad_with_zeros(2, 0, ph)?;
    }
    if pw > 0 {
        y = y.pad_with_zeros(3, 0, pw)?;
    }
    Ok((y, (h, w)))
}

/// Convolution, optional instance norm, then an activation.
#[derive(Debug, Clone)]
pub struct ConvBlock {
    conv: Conv2d,
    norm: bool,
    leak: Option<f64>,
}

impl ConvBlock {
    pub fn new(
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        norm: bool,
        leak: Option<f64>,
        vb: VarBuilder,
    ) -> Result<Self> {
        Ok(Self {
            conv: conv(in_c, out_c, k, stride, k / 2, vb)?,
            norm,
            leak,
        })
    }
}

impl Module for ConvBlock {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut y = self.conv.forward(x)?;
        if self.norm {
            y = instance_norm(&y)?;
        }
        match self.leak {
            Some(slope) => candle_nn::ops::leaky_relu(&y, slope),
            None => y.relu(),
        }
    }
}

/// Two 3×3 convolutions with instance norm and an identity shortcut.
#[derive(Debug, Clone)]
pub struct ResBlock {
    conv1: Conv2d,
    conv2: Conv2d,
}

impl ResBlock {
    pub fn new(channels: usize, vb: VarBuilder) -> Result<Self> {
        Ok(Self {
            conv1: conv(channels, channels, 3, 1, 1, vb.pp("conv1"))?,
            conv2: conv(channels, channels, 3, 1, 1, vb.pp("conv2"))?,
        })
    }
}

impl Module for ResBlock {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = instance_norm(&self.conv1.forward(x)?)?.relu()?;
        let y = instance_norm(&self.conv2.forward(&y)?)?;
        x + y
    }
}
