/// Resampling kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interp {
    Bilinear,
    Nearest,
}

/// Bilinear sample of an interleaved `h × w × channels` buffer at continuous
/// pixel-centre coordinates, clamping to the border. Writes `channels`
/// values into `out`.
pub fn sample_bilinear_clamped(
    data: &[f32],
    height: usize,
    width: usize,
    channels: usize,
    x: f64,
    y: f64,
    out: &mut [f32],
) {
    let x = x.clamp(0.0, (width - 1) as f64);
    let y = y.clamp(0.0, (height - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = (x - x0 as f64) as f32;
    let fy = (y - y0 as f64) as f32;
    let idx = |yy: usize, xx: usize| (yy * width + xx) * channels;
    let (a, b, c, d) = (idx(y0, x0), idx(y0, x1), idx(y1, x0), idx(y1, x1));
    for k in 0..channels {
        let top = data[a + k] * (1.0 - fx) + data[b + k] * fx;
        let bot = data[c + k] * (1.0 - fx) + data[d + k] * fx;
        out[k] = top * (1.0 - fy) + bot * fy;
    }
}

/// Resizes an interleaved buffer with half-pixel-centre alignment.
pub(crate) fn resize_interleaved(
    data: &[f32],
    height: usize,
    width: usize,
    channels: usize,
    out_h: usize,
    out_w: usize,
    interp: Interp,
) -> Vec<f32> {
    let sy = height as f64 / out_h as f64;
    let sx = width as f64 / out_w as f64;
    let mut out = vec![0f32; out_h * out_w * channels];
    for v in 0..out_h {
        let y = (v as f64 + 0.5) * sy - 0.5;
        for u in 0..out_w {
            let x = (u as f64 + 0.5) * sx - 0.5;
            let o = (v * out_w + u) * channels;
            match interp {
                Interp::Bilinear => sample_bilinear_clamped(
                    data,
                    height,
                    width,
                    channels,
                    x,
                    y,
                    &mut out[o..o + channels],
                ),
                Interp::Nearest => {
                    let xi = (x + 0.5).floor().clamp(0.0, (width - 1) as f64) as usize;
                    let yi = (y + 0.5).floor().clamp(0.0, (height - 1) as f64) as usize;
                    let i = (yi * width + xi) * channels;
                    out[o..o + channels].copy_from_slice(&data[i..i + channels]);
                }
            }
        }
    }
    out
}

impl super::Frame {
    pub fn resize(&self, height: usize, width: usize, interp: Interp) -> super::Frame {
        super::Frame {
            height,
            width,
            data: resize_interleaved(&self.data, self.height, self.width, 3, height, width, interp),
        }
    }
}

impl super::Mask {
    pub fn resize(&self, height: usize, width: usize, interp: Interp) -> super::Mask {
        super::Mask {
            height,
            width,
            data: resize_interleaved(&self.data, self.height, self.width, 1, height, width, interp),
        }
    }
}

impl super::ParsingMap {
    pub fn resize_nearest(&self, height: usize, width: usize) -> super::ParsingMap {
        let as_f: Vec<f32> = self.labels.iter().map(|&l| l as f32).collect();
        let out = resize_interleaved(&as_f, self.height, self.width, 1, height, width, Interp::Nearest);
        super::ParsingMap {
            height,
            width,
            num_classes: self.num_classes,
            labels: out.into_iter().map(|v| v as u8).collect(),
        }
    }
}
