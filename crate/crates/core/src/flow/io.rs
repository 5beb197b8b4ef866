use std::fs;
use std::path::Path;

use super::{FlowField, VisibilityMap};
use crate::error::{Error, Result};
use crate::region::{read_label_png, write_label_png};

/// Leading tag of a `.flo` file.
pub const FLO_MAGIC: f32 = 202021.25;

/// Writes the standard `.flo` layout: magic, `i32` width, `i32` height,
/// then row-major interleaved little-endian `f32` pairs.
pub fn write_flo(path: &Path, flow: &FlowField) -> Result<()> {
    let mut buf = Vec::with_capacity(12 + flow.data.len() * 4);
    buf.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    buf.extend_from_slice(&(flow.width as i32).to_le_bytes());
    buf.extend_from_slice(&(flow.height as i32).to_le_bytes());
    for v in &flow.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_flo(path: &Path) -> Result<FlowField> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_flo(&bytes)
}

fn parse_flo(bytes: &[u8]) -> Result<FlowField> {
    let bad = |detail: &str| Error::Format {
        what: "flo",
        detail: detail.to_string(),
    };
    if bytes.len() < 12 {
        return Err(bad("truncated header"));
    }
    let word = |i: usize| <[u8; 4]>::try_from(&bytes[i..i + 4]).unwrap();
    if f32::from_le_bytes(word(0)) != FLO_MAGIC {
        return Err(bad("bad magic"));
    }
    let w = i32::from_le_bytes(word(4));
    let h = i32::from_le_bytes(word(8));
    if w <= 0 || h <= 0 {
        return Err(bad("non-positive dimensions"));
    }
    let n = w as usize * h as usize * 2;
    if bytes.len() != 12 + n * 4 {
        return Err(bad("payload length does not match dimensions"));
    }
    let data = (0..n).map(|i| f32::from_le_bytes(word(12 + i * 4))).collect();
    FlowField::new(h as usize, w as usize, data)
}

pub fn write_visibility_png(path: &Path, vis: &VisibilityMap) -> Result<()> {
    write_label_png(path, vis.height, vis.width, &vis.labels)
}

pub fn read_visibility_png(path: &Path) -> Result<VisibilityMap> {
    let (h, w, labels) = read_label_png(path)?;
    VisibilityMap::new(h, w, labels)
}
