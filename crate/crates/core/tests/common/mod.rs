//! Oracles shared by the integration test targets.
#![allow(dead_code)]

use candle_core::{Device, Tensor, Var};
use motionflow::flow::Face;

pub const FD_STEP: f64 = 1e-4;
pub const FD_TOL: f64 = 1e-3;

/// Largest relative error between the autograd gradient of `f` at `x0` and
/// central differences. Entries where both are tiny are compared absolutely.
pub fn max_rel_err(x0: &[f64], shape: &[usize], f: impl Fn(&Tensor) -> Tensor) -> f64 {
    let dev = Device::Cpu;
    let var = Var::from_vec(x0.to_vec(), shape, &dev).unwrap();
    let loss = f(var.as_tensor());
    let grads = loss.backward().unwrap();
    let g: Vec<f64> = grads.get(var.as_tensor()).unwrap().flatten_all().unwrap().to_vec1().unwrap();
    let eval = |x: &[f64]| -> f64 {
        let t = Tensor::from_vec(x.to_vec(), shape, &dev).unwrap();
        f(&t).to_scalar::<f64>().unwrap()
    };
    let mut worst = 0f64;
    for i in 0..x0.len() {
        let mut plus = x0.to_vec();
        let mut minus = x0.to_vec();
        plus[i] += FD_STEP;
        minus[i] -= FD_STEP;
        let fd = (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP);
        let scale = g[i].abs().max(fd.abs()).max(1e-6);
        worst = worst.max((g[i] - fd).abs() / scale);
    }
    worst
}

/// `(1, C, H, W)` one-hot tensor in f64.
pub fn one_hot(labels: &[usize], c: usize, h: usize, w: usize) -> Tensor {
    let mut v = vec![0f64; c * h * w];
    for (p, &l) in labels.iter().enumerate() {
        v[l * h * w + p] = 1.0;
    }
    Tensor::from_vec(v, (1, c, h, w), &Device::Cpu).unwrap()
}

/// Weights of the least-squares polynomial evaluated at 0, from the normal
/// equations solved by Gauss-Jordan elimination.
pub fn normal_equation_weights(offsets: &[f64], degree: usize) -> Vec<f64> {
    let n = degree + 1;
    // [AᵀA | Aᵀ]
    let mut m = vec![vec![0f64; n + offsets.len()]; n];
    for r in 0..n {
        for c in 0..n {
            m[r][c] = offsets.iter().map(|t| t.powi((r + c) as i32)).sum();
        }
        for (k, t) in offsets.iter().enumerate() {
            m[r][n + k] = t.powi(r as i32);
        }
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap()).unwrap();
        m.swap(col, piv);
        let p = m[col][col];
        m[col].iter_mut().for_each(|v| *v /= p);
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                let row = m[col].clone();
                m[r].iter_mut().zip(&row).for_each(|(v, s)| *v -= f * s);
            }
        }
    }
    m[0][n..].to_vec()
}

/// Point-in-triangle by edge signs, boundary included, no slack.
pub fn inside(v: &[[f32; 2]; 3], x: f64, y: f64) -> bool {
    let e = |a: [f32; 2], b: [f32; 2]| {
        (b[0] as f64 - a[0] as f64) * (y - a[1] as f64) - (b[1] as f64 - a[1] as f64) * (x - a[0] as f64)
    };
    let (d0, d1, d2) = (e(v[0], v[1]), e(v[1], v[2]), e(v[2], v[0]));
    (d0 >= 0.0 && d1 >= 0.0 && d2 >= 0.0) || (d0 <= 0.0 && d1 <= 0.0 && d2 <= 0.0)
}

fn clearly_inside(v: &[[f32; 2]; 3], x: f64, y: f64) -> bool {
    [(-0.01, 0.0), (0.01, 0.0), (0.0, -0.01), (0.0, 0.01)]
        .iter()
        .all(|(dx, dy)| inside(v, x + dx, y + dy))
}

/// Solves `p = Σ w_i v_i` for the barycentric weights of `p` in `v`.
fn barycentric(v: &[[f32; 2]; 3], x: f64, y: f64) -> [f64; 3] {
    let [a, b, c] = v.map(|p| [p[0] as f64, p[1] as f64]);
    let det = (b[1] - c[1]) * (a[0] - c[0]) + (c[0] - b[0]) * (a[1] - c[1]);
    let w0 = ((b[1] - c[1]) * (x - c[0]) + (c[0] - b[0]) * (y - c[1])) / det;
    let w1 = ((c[1] - a[1]) * (x - c[0]) + (a[0] - c[0]) * (y - c[1])) / det;
    [w0, w1, 1.0 - w0 - w1]
}

/// Per-pixel brute-force visibility: the nearest target face at the pixel
/// is mapped barycentrically into the source view and tested against every
/// nearer source face. `None` marks pixels within 0.01 px of any edge, where
/// the answer depends on boundary conventions.
pub fn brute_force_visibility(source: &[Face], target: &[Face], h: usize, w: usize) -> Vec<Option<u8>> {
    let mut out = vec![None; h * w];
    for y in 0..h {
        for x in 0..w {
            let (px, py) = (x as f64, y as f64);
            let ambiguous = |f: &Face| inside(&f.vertices, px, py) != clearly_inside(&f.vertices, px, py);
            if target.iter().any(ambiguous) {
                continue;
            }
            let front = target
                .iter()
                .filter(|f| clearly_inside(&f.vertices, px, py))
                .min_by(|a, b| a.depth.partial_cmp(&b.depth).unwrap());
            let Some(tf) = front else {
                out[y * w + x] = Some(0);
                continue;
            };
            let sf = source.iter().find(|f| f.id == tf.id).unwrap();
            let wts = barycentric(&tf.vertices, px, py);
            let sx: f64 = (0..3).map(|k| wts[k] * sf.vertices[k][0] as f64).sum();
            let sy: f64 = (0..3).map(|k| wts[k] * sf.vertices[k][1] as f64).sum();
            let near_src_edge = source
                .iter()
                .any(|o| inside(&o.vertices, sx, sy) != clearly_inside(&o.vertices, sx, sy));
            if near_src_edge {
                continue;
            }
            let hidden = source
                .iter()
                .any(|o| o.id != sf.id && o.depth < sf.depth && inside(&o.vertices, sx, sy));
            out[y * w + x] = Some(if hidden { 2 } else { 1 });
        }
    }
    out
}
