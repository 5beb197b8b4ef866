use serde::{Deserialize, Serialize};

use super::resample::sample_bilinear_clamped;
use super::{Frame, Mask, ParsingMap};
use crate::error::{Error, Result};

/// Maps the square working-resolution crop back to source-frame coordinates.
///
/// The source box `[top, bottom) × [left, right)` is padded with zeros to a
/// square of side `max(h, w)` (`pad_top` / `pad_left` before the content) and
/// then resized by `scale`. Pixel centres sit at integer coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropRecord {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub scale: f64,
    pub source_h: usize,
    pub source_w: usize,
}

impl CropRecord {
    /// Record for the given box, padded symmetrically to a square and scaled to `target`.
    pub fn from_box(
        (top, left, bottom, right): (usize, usize, usize, usize),
        source_h: usize,
        source_w: usize,
        target: usize,
    ) -> Result<Self> {
        let rec_h = bottom.saturating_sub(top);
        let rec_w = right.saturating_sub(left);
        let side = rec_h.max(rec_w);
        let rec = CropRecord {
            top,
            left,
            bottom,
            right,
            pad_top: (side - rec_h) / 2,
            pad_left: (side - rec_w) / 2,
            scale: target as f64 / side.max(1) as f64,
            source_h,
            source_w,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.top < self.bottom
            && self.bottom <= self.source_h
            && self.left < self.right
            && self.right <= self.source_w
            && self.scale > 0.0
            && self.scale.is_finite();
        if !ok {
            return Err(Error::invalid(format!("inconsistent crop record {self:?}")));
        }
        Ok(())
    }

    pub fn side(&self) -> usize {
        (self.bottom - self.top).max(self.right - self.left)
    }

    /// Edge length of the working-resolution crop.
    pub fn target(&self) -> usize {
        (self.side() as f64 * self.scale).round() as usize
    }

    /// Source-frame `(x, y)` to working-crop coordinates.
    pub fn to_working(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.left as f64 + self.pad_left as f64 + 0.5) * self.scale - 0.5,
            (y - self.top as f64 + self.pad_top as f64 + 0.5) * self.scale - 0.5,
        )
    }

    /// Working-crop `(u, v)` to source-frame coordinates.
    pub fn to_source(&self, u: f64, v: f64) -> (f64, f64) {
        (
            (u + 0.5) / self.scale - 0.5 - self.pad_left as f64 + self.left as f64,
            (v + 0.5) / self.scale - 0.5 - self.pad_top as f64 + self.top as f64,
        )
    }

    /// Source pixel backing padded-square cell `(py, px)`, if it lies inside the box.
    fn padded_to_source(&self, py: usize, px: usize) -> Option<(usize, usize)> {
        let y = (self.top + py).checked_sub(self.pad_top)?;
        let x = (self.left + px).checked_sub(self.pad_left)?;
        (y < self.bottom && x < self.right).then_some((y, x))
    }
}

/// Tight `(top, left, bottom, right)` box of the non-background labels.
pub fn foreground_bbox(parsing: &ParsingMap) -> Option<(usize, usize, usize, usize)> {
    let mut bbox: Option<(usize, usize, usize, usize)> = None;
    for y in 0..parsing.height {
        for x in 0..parsing.width {
            if parsing.at(y, x) == 0 {
                continue;
            }
            bbox = Some(match bbox {
                None => (y, x, y + 1, x + 1),
                Some((t, l, b, r)) => (t.min(y), l.min(x), b.max(y + 1), r.max(x + 1)),
            });
        }
    }
    bbox
}

/// Default crop margin: 10% of the larger foreground box side.
pub fn default_margin(parsing: &ParsingMap) -> usize {
    foreground_bbox(parsing)
        .map(|(t, l, b, r)| ((b - t).max(r - l) as f64 * 0.1).round() as usize)
        .unwrap_or(0)
}

fn padded_square(frame: &Frame, rec: &CropRecord) -> Vec<f32> {
    let side = rec.side();
    let mut sq = vec![0f32; side * side * 3];
    for py in 0..side {
        for px in 0..side {
            if let Some((y, x)) = rec.padded_to_source(py, px) {
                let o = (py * side + px) * 3;
                sq[o..o + 3].copy_from_slice(&frame.data[(y * frame.width + x) * 3..][..3]);
            }
        }
    }
    sq
}

/// Crops `frame` to the record's box, pads and resamples it bilinearly to the
/// record's working size.
pub fn crop_with_record(frame: &Frame, rec: &CropRecord) -> Result<Frame> {
    rec.validate()?;
    if frame.height != rec.source_h || frame.width != rec.source_w {
        return Err(Error::invalid("frame does not match the crop record source size"));
    }
    let side = rec.side();
    let target = rec.target();
    let sq = padded_square(frame, rec);
    let mut out = Frame::zeros(target, target);
    for v in 0..target {
        for u in 0..target {
            let px = (u as f64 + 0.5) / rec.scale - 0.5;
            let py = (v as f64 + 0.5) / rec.scale - 0.5;
            let o = (v * target + u) * 3;
            sample_bilinear_clamped(&sq, side, side, 3, px, py, &mut out.data[o..o + 3]);
        }
    }
    Ok(out)
}

/// Nearest-neighbour counterpart of [`crop_with_record`] for label maps.
pub fn crop_parsing_with_record(parsing: &ParsingMap, rec: &CropRecord) -> Result<ParsingMap> {
    rec.validate()?;
    if parsing.height != rec.source_h || parsing.width != rec.source_w {
        return Err(Error::invalid("parsing map does not match the crop record source size"));
    }
    let side = rec.side() as f64;
    let target = rec.target();
    let mut labels = vec![0u8; target * target];
    for v in 0..target {
        for u in 0..target {
            let px = ((u as f64 + 0.5) / rec.scale - 0.5 + 0.5).floor().clamp(0.0, side - 1.0);
            let py = ((v as f64 + 0.5) / rec.scale - 0.5 + 0.5).floor().clamp(0.0, side - 1.0);
            if let Some((y, x)) = rec.padded_to_source(py as usize, px as usize) {
                labels[v * target + u] = parsing.at(y, x);
            }
        }
    }
    Ok(ParsingMap {
        height: target,
        width: target,
        num_classes: parsing.num_classes,
        labels,
    })
}

/// Crops the foreground (non-zero labels) of `frame` into a `target × target`
/// square. The tight box is grown by `margin` (clamped to the frame), padded
/// to a square with zeros and resized by one isotropic scale.
pub fn crop_foreground(
    frame: &Frame,
    parsing: &ParsingMap,
    margin: usize,
    target: usize,
) -> Result<(Frame, ParsingMap, CropRecord)> {
    if frame.height != parsing.height || frame.width != parsing.width {
        return Err(Error::invalid("frame and parsing map dimensions differ"));
    }
    if target == 0 {
        return Err(Error::invalid("crop target must be positive"));
    }
    let (t, l, b, r) = foreground_bbox(parsing).ok_or(Error::NoForeground)?;
    let bbox = (
        t.saturating_sub(margin),
        l.saturating_sub(margin),
        (b + margin).min(frame.height),
        (r + margin).min(frame.width),
    );
    let rec = CropRecord::from_box(bbox, frame.height, frame.width, target)?;
    Ok((
        crop_with_record(frame, &rec)?,
        crop_parsing_with_record(parsing, &rec)?,
        rec,
    ))
}

fn check_working(height: usize, width: usize, rec: &CropRecord) -> Result<()> {
    rec.validate()?;
    let target = rec.target();
    if height != target || width != target {
        return Err(Error::invalid(format!(
            "cropped image is {height}x{width}, record expects {target}x{target}"
        )));
    }
    Ok(())
}

fn restore_interleaved(
    data: &[f32],
    channels: usize,
    rec: &CropRecord,
    nearest: bool,
) -> Vec<f32> {
    let target = rec.target();
    let mut out = vec![0f32; rec.source_h * rec.source_w * channels];
    for y in rec.top..rec.bottom {
        for x in rec.left..rec.right {
            let (u, v) = rec.to_working(x as f64, y as f64);
            let o = (y * rec.source_w + x) * channels;
            if nearest {
                let ui = (u + 0.5).floor().clamp(0.0, (target - 1) as f64) as usize;
                let vi = (v + 0.5).floor().clamp(0.0, (target - 1) as f64) as usize;
                let i = (vi * target + ui) * channels;
                out[o..o + channels].copy_from_slice(&data[i..i + channels]);
            } else {
                sample_bilinear_clamped(data, target, target, channels, u, v, &mut out[o..o + channels]);
            }
        }
    }
    out
}

/// Inverse of [`crop_with_record`]: resamples the crop back to the source
/// box and places it on a zero canvas of the source size.
pub fn restore_to_frame(cropped: &Frame, rec: &CropRecord) -> Result<Frame> {
    check_working(cropped.height, cropped.width, rec)?;
    Ok(Frame {
        height: rec.source_h,
        width: rec.source_w,
        data: restore_interleaved(&cropped.data, 3, rec, false),
    })
}

pub fn restore_mask(cropped: &Mask, rec: &CropRecord) -> Result<Mask> {
    check_working(cropped.height, cropped.width, rec)?;
    Ok(Mask {
        height: rec.source_h,
        width: rec.source_w,
        data: restore_interleaved(&cropped.data, 1, rec, false),
    })
}

pub fn restore_parsing(cropped: &ParsingMap, rec: &CropRecord) -> Result<ParsingMap> {
    check_working(cropped.height, cropped.width, rec)?;
    let as_f: Vec<f32> = cropped.labels.iter().map(|&l| l as f32).collect();
    Ok(ParsingMap {
        height: rec.source_h,
        width: rec.source_w,
        num_classes: cropped.num_classes,
        labels: restore_interleaved(&as_f, 1, rec, true)
            .into_iter()
            .map(|v| v as u8)
            .collect(),
    })
}
