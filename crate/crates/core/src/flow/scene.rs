use std::collections::{HashMap, HashSet};

use super::{FlowField, VisibilityMap};
use crate::error::{Error, Result};
use crate::region::{Frame, ParsingMap};

/// Barycentric slack when testing whether a point lies on a triangle, so
/// shared edges and round-off do not open cracks.
const INSIDE_EPS: f64 = 1e-6;
/// Two faces closer in depth than this are treated as the same surface.
const DEPTH_EPS: f32 = 1e-4;

/// A 2D triangle with a stable identity shared between the two views.
/// Smaller depth is nearer to the camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Face {
    pub id: u32,
    pub vertices: [[f32; 2]; 3],
    pub depth: f32,
    /// Per-vertex RGB, interpolated barycentrically when rendering.
    pub colors: [[f32; 3]; 3],
    /// Parsing label written by [`render_faces`].
    pub label: u8,
}

impl Face {
    fn signed_area2(&self) -> f64 {
        let [a, b, c] = self.vertices.map(|v| [v[0] as f64, v[1] as f64]);
        (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    }

    pub fn is_degenerate(&self) -> bool {
        self.signed_area2().abs() < 1e-9
    }

    /// Barycentric coordinates of `(x, y)`; `None` for degenerate faces.
    pub fn barycentric(&self, x: f64, y: f64) -> Option<[f64; 3]> {
        let area = self.signed_area2();
        if area.abs() < 1e-9 {
            return None;
        }
        let [a, b, c] = self.vertices.map(|v| [v[0] as f64, v[1] as f64]);
        let w0 = ((b[0] - x) * (c[1] - y) - (b[1] - y) * (c[0] - x)) / area;
        let w1 = ((c[0] - x) * (a[1] - y) - (c[1] - y) * (a[0] - x)) / area;
        Some([w0, w1, 1.0 - w0 - w1])
    }

    fn contains(&self, x: f64, y: f64) -> Option<[f64; 3]> {
        self.barycentric(x, y)
            .filter(|w| w.iter().all(|&v| v >= -INSIDE_EPS))
    }

    fn interpolate(&self, w: [f64; 3]) -> (f64, f64) {
        let mut p = (0.0, 0.0);
        for (wi, v) in w.iter().zip(&self.vertices) {
            p.0 += wi * v[0] as f64;
            p.1 += wi * v[1] as f64;
        }
        p
    }

    fn bbox(&self, height: usize, width: usize) -> Option<(usize, usize, usize, usize)> {
        let xs = self.vertices.map(|v| v[0] as f64);
        let ys = self.vertices.map(|v| v[1] as f64);
        let x0 = xs.iter().cloned().fold(f64::INFINITY, f64::min).ceil().max(0.0);
        let x1 = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max).floor().min(width as f64 - 1.0);
        let y0 = ys.iter().cloned().fold(f64::INFINITY, f64::min).ceil().max(0.0);
        let y1 = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max).floor().min(height as f64 - 1.0);
        (x0 <= x1 && y0 <= y1).then_some((y0 as usize, x0 as usize, y1 as usize, x1 as usize))
    }
}

/// Two views of the same triangulated surface: faces in `source` and
/// `target` correspond through their `id`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceScene {
    pub height: usize,
    pub width: usize,
    pub source: Vec<Face>,
    pub target: Vec<Face>,
}

impl CorrespondenceScene {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::invalid("scene canvas must be non-empty"));
        }
        let ids = |faces: &[Face]| -> Result<HashSet<u32>> {
            let mut set = HashSet::new();
            for f in faces {
                if !f.depth.is_finite() || f.vertices.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::invalid(format!("face {} has non-finite geometry", f.id)));
                }
                if !set.insert(f.id) {
                    return Err(Error::invalid(format!("duplicate face id {}", f.id)));
                }
            }
            Ok(set)
        };
        if ids(&self.source)? != ids(&self.target)? {
            return Err(Error::invalid("source and target face sets differ"));
        }
        Ok(())
    }
}

/// Per-pixel z-buffer result: index of the winning face and its barycentric weights.
struct Coverage {
    face: Vec<Option<usize>>,
    weights: Vec<[f64; 3]>,
    skipped: Vec<u32>,
}

fn rasterize(faces: &[Face], height: usize, width: usize) -> Coverage {
    let mut cov = Coverage {
        face: vec![None; height * width],
        weights: vec![[0.0; 3]; height * width],
        skipped: Vec::new(),
    };
    let mut zbuf = vec![f32::INFINITY; height * width];
    for (fi, face) in faces.iter().enumerate() {
        if face.is_degenerate() {
            log::warn!("skipping degenerate face {}", face.id);
            cov.skipped.push(face.id);
            continue;
        }
        let Some((y0, x0, y1, x1)) = face.bbox(height, width) else {
            continue;
        };
        for y in y0..=y1 {
            for x in x0..=x1 {
                let i = y * width + x;
                if face.depth >= zbuf[i] {
                    continue;
                }
                if let Some(w) = face.contains(x as f64, y as f64) {
                    zbuf[i] = face.depth;
                    cov.face[i] = Some(fi);
                    cov.weights[i] = w;
                }
            }
        }
    }
    cov
}

/// Flow/visibility ground truth plus the ids of faces skipped as degenerate.
#[derive(Debug, Clone)]
pub struct OracleOutput {
    pub flow: FlowField,
    pub visibility: VisibilityMap,
    pub skipped_faces: Vec<u32>,
}

/// Ground-truth appearance flow and visibility for a correspondence scene.
///
/// Each target pixel covered by face `f` is mapped barycentrically onto `f`
/// in the source view. The pixel is visible when no source face lies in
/// front of `f` at that point; it then carries flow `source − target`.
/// Occluded pixels are invisible with zero flow, uncovered pixels are
/// background with zero flow.
pub fn oracle_flow(scene: &CorrespondenceScene) -> Result<OracleOutput> {
    scene.validate()?;
    let (h, w) = (scene.height, scene.width);
    let cov = rasterize(&scene.target, h, w);
    let by_id: HashMap<u32, usize> = scene
        .source
        .iter()
        .enumerate()
        .map(|(i, f)| (f.id, i))
        .collect();
    let mut skipped = cov.skipped.clone();
    skipped.extend(scene.source.iter().filter(|f| f.is_degenerate()).map(|f| f.id));
    skipped.sort_unstable();
    skipped.dedup();

    let mut flow = FlowField::zeros(h, w);
    let mut vis = VisibilityMap::filled(h, w, VisibilityMap::BACKGROUND);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let Some(fi) = cov.face[i] else { continue };
            let tface = &scene.target[fi];
            let sface = &scene.source[by_id[&tface.id]];
            if sface.is_degenerate() {
                vis.labels[i] = VisibilityMap::INVISIBLE;
                continue;
            }
            let (sx, sy) = sface.interpolate(cov.weights[i]);
            let occluded = scene.source.iter().any(|other| {
                other.id != sface.id
                    && other.depth < sface.depth - DEPTH_EPS
                    && other.contains(sx, sy).is_some()
            });
            if occluded {
                vis.labels[i] = VisibilityMap::INVISIBLE;
            } else {
                vis.labels[i] = VisibilityMap::VISIBLE;
                flow.set(y, x, (sx - x as f64) as f32, (sy - y as f64) as f32);
            }
        }
    }
    Ok(OracleOutput {
        flow,
        visibility: vis,
        skipped_faces: skipped,
    })
}

/// Image, label map and coverage mask of a rasterized face list.
#[derive(Debug, Clone)]
pub struct Rendered {
    pub frame: Frame,
    pub parsing: ParsingMap,
}

/// Z-buffered rendering over `background` (black when `None`).
pub fn render_faces(
    faces: &[Face],
    height: usize,
    width: usize,
    background: Option<&Frame>,
    num_classes: usize,
) -> Result<Rendered> {
    let mut frame = match background {
        Some(bg) if bg.height == height && bg.width == width => bg.clone(),
        Some(_) => return Err(Error::invalid("background does not match the canvas")),
        None => Frame::zeros(height, width),
    };
    if let Some(f) = faces.iter().find(|f| f.label as usize >= num_classes) {
        return Err(Error::invalid(format!("face label {} outside {num_classes} classes", f.label)));
    }
    let mut parsing = ParsingMap::background(height, width, num_classes);
    let cov = rasterize(faces, height, width);
    for (i, fi) in cov.face.iter().enumerate() {
        let Some(fi) = fi else { continue };
        let face = &faces[*fi];
        let w = cov.weights[i];
        let mut rgb = [0f32; 3];
        for (wk, col) in w.iter().zip(&face.colors) {
            for c in 0..3 {
                rgb[c] += (*wk as f32) * col[c];
            }
        }
        frame.data[i * 3..i * 3 + 3].copy_from_slice(&rgb.map(|v| v.clamp(0.0, 1.0)));
        parsing.labels[i] = face.label;
    }
    Ok(Rendered { frame, parsing })
}
