use crate::error::{Error, Result};
use crate::region::{Frame, Mask};

/// Pixels within `radius` (Chebyshev distance) of a foreground/background
/// transition of the binarised `mask`.
pub fn boundary_band(mask: &Mask, radius: usize) -> Vec<bool> {
    let (h, w) = (mask.height, mask.width);
    let fg = |y: usize, x: usize| mask.data[y * w + x] >= 0.5;
    let mut edge = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            let here = fg(y, x);
            let differs = (x + 1 < w && fg(y, x + 1) != here) || (y + 1 < h && fg(y + 1, x) != here);
            if differs {
                edge[y * w + x] = true;
            }
        }
    }
    let mut band = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            if !edge[y * w + x] {
                continue;
            }
            for yy in y.saturating_sub(radius)..(y + radius + 2).min(h) {
                for xx in x.saturating_sub(radius)..(x + radius + 2).min(w) {
                    band[yy * w + xx] = true;
                }
            }
        }
    }
    band
}

/// Mean absolute RGB error of `out` against `truth` inside the boundary band
/// of `mask`.
pub fn seam_error(out: &Frame, truth: &Frame, mask: &Mask, radius: usize) -> Result<f64> {
    if !out.same_shape(truth) || (mask.height, mask.width) != (out.height, out.width) {
        return Err(Error::invalid("seam metric inputs differ in size"));
    }
    let band = boundary_band(mask, radius);
    let (mut sum, mut n) = (0f64, 0usize);
    for (i, _) in band.iter().enumerate().filter(|(_, &b)| b) {
        for c in 0..3 {
            sum += (out.data[i * 3 + c] - truth.data[i * 3 + c]).abs() as f64;
        }
        n += 3;
    }
    if n == 0 {
        return Err(Error::invalid("mask has no boundary"));
    }
    Ok(sum / n as f64)
}
