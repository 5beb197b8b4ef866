//! Foreground cropping to the working resolution, restoration to
//! full-frame coordinates, and alpha compositing.

mod crop;
mod io;
pub(crate) mod resample;

pub use crop::{
    crop_foreground, crop_parsing_with_record, crop_with_record, default_margin, foreground_bbox,
    restore_mask, restore_parsing, restore_to_frame, CropRecord,
};
pub use io::{
    read_crop_record, read_frame_png, read_label_png, read_parsing_png, write_crop_record,
    write_frame_png, write_label_png, write_parsing_png,
};
pub use resample::{sample_bilinear_clamped, Interp};

use crate::error::{Error, Result};

/// Height × width × RGB image, row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Frame {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * 3 {
            return Err(Error::invalid(format!(
                "frame buffer of {} values does not match {height}x{width}x3",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("frame contains non-finite values"));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width * 3],
        }
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Self {
        let mut f = Self::zeros(height, width);
        for px in f.data.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        f
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(y, x));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, y: usize, x: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn same_shape(&self, other: &Frame) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// Zeroes every pixel where `mask` is zero.
    pub fn masked(&self, mask: &Mask) -> Result<Frame> {
        if mask.height != self.height || mask.width != self.width {
            return Err(Error::invalid("mask and frame dimensions differ"));
        }
        let mut out = self.clone();
        for (px, &m) in out.data.chunks_exact_mut(3).zip(&mask.data) {
            for v in px {
                *v *= m;
            }
        }
        Ok(out)
    }

    pub fn mean_abs_diff(&self, other: &Frame) -> Result<f64> {
        if !self.same_shape(other) {
            return Err(Error::invalid("frame dimensions differ"));
        }
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs() as f64)
            .sum();
        Ok(sum / self.data.len().max(1) as f64)
    }
}

/// Per-pixel label map. Label 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsingMap {
    pub height: usize,
    pub width: usize,
    pub num_classes: usize,
    pub labels: Vec<u8>,
}

impl ParsingMap {
    pub fn new(height: usize, width: usize, num_classes: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::invalid(format!(
                "label buffer of {} values does not match {height}x{width}",
                labels.len()
            )));
        }
        if num_classes == 0 || num_classes > 256 {
            return Err(Error::invalid(format!("unsupported class count {num_classes}")));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= num_classes) {
            return Err(Error::invalid(format!(
                "label {bad} outside [0, {num_classes})"
            )));
        }
        Ok(Self {
            height,
            width,
            num_classes,
            labels,
        })
    }

    pub fn background(height: usize, width: usize, num_classes: usize) -> Self {
        Self {
            height,
            width,
            num_classes,
            labels: vec![0; height * width],
        }
    }

    pub fn at(&self, y: usize, x: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn foreground_mask(&self) -> Mask {
        Mask {
            height: self.height,
            width: self.width,
            data: self.labels.iter().map(|&l| (l != 0) as u8 as f32).collect(),
        }
    }

    pub fn foreground_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }

    /// Class-major one-hot encoding, `C × H × W`.
    pub fn one_hot(&self) -> Vec<f32> {
        let n = self.height * self.width;
        let mut out = vec![0f32; self.num_classes * n];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l as usize * n + i] = 1.0;
        }
        out
    }
}

/// Single-channel soft mask in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Mask {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::invalid("mask buffer does not match its dimensions"));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn constant(height: usize, width: usize, value: f32) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }
}

/// Per-pixel convex combination `fg · mask + bg · (1 − mask)`.
pub fn composite(fg: &Frame, bg: &Frame, mask: &Mask) -> Result<Frame> {
    if !fg.same_shape(bg) || mask.height != fg.height || mask.width != fg.width {
        return Err(Error::invalid(format!(
            "composite shapes differ: fg {}x{}, bg {}x{}, mask {}x{}",
            fg.height, fg.width, bg.height, bg.width, mask.height, mask.width
        )));
    }
    let mut out = Frame::zeros(fg.height, fg.width);
    for (i, &m) in mask.data.iter().enumerate() {
        for c in 0..3 {
            let k = i * 3 + c;
            out.data[k] = fg.data[k] * m + bg.data[k] * (1.0 - m);
        }
    }
    Ok(out)
}
