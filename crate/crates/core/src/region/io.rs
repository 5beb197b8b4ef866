use std::path::Path;

use image::{GrayImage, RgbImage};

use super::{CropRecord, Frame, ParsingMap};
use crate::error::{Error, Result};

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

/// Writes an 8-bit RGB PNG.
pub fn write_frame_png(path: &Path, frame: &Frame) -> Result<()> {
    ensure_parent(path)?;
    let buf: Vec<u8> = frame.data.iter().map(|&v| quantize(v)).collect();
    let img = RgbImage::from_raw(frame.width as u32, frame.height as u32, buf)
        .ok_or_else(|| Error::invalid("frame buffer size mismatch"))?;
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub fn read_frame_png(path: &Path) -> Result<Frame> {
    let img = image::open(path)?.to_rgb8();
    let (w, h) = img.dimensions();
    Frame::new(
        h as usize,
        w as usize,
        img.into_raw().into_iter().map(|v| v as f32 / 255.0).collect(),
    )
}

/// Single-channel 8-bit PNG of raw label values.
pub fn write_label_png(path: &Path, height: usize, width: usize, labels: &[u8]) -> Result<()> {
    ensure_parent(path)?;
    let img = GrayImage::from_raw(width as u32, height as u32, labels.to_vec())
        .ok_or_else(|| Error::invalid("label buffer size mismatch"))?;
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub fn read_label_png(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let img = image::open(path)?.to_luma8();
    let (w, h) = img.dimensions();
    Ok((h as usize, w as usize, img.into_raw()))
}

pub fn write_parsing_png(path: &Path, parsing: &ParsingMap) -> Result<()> {
    write_label_png(path, parsing.height, parsing.width, &parsing.labels)
}

pub fn read_parsing_png(path: &Path, num_classes: usize) -> Result<ParsingMap> {
    let (h, w, labels) = read_label_png(path)?;
    ParsingMap::new(h, w, num_classes, labels)
}

pub fn write_crop_record(path: &Path, rec: &CropRecord) -> Result<()> {
    ensure_parent(path)?;
    let text = serde_json::to_string(rec)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_crop_record(path: &Path) -> Result<CropRecord> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rec: CropRecord = serde_json::from_str(&text)?;
    rec.validate()?;
    Ok(rec)
}
