use serde::{Deserialize, Serialize};

use super::{PoseFrame, LIMBS, NUM_JOINTS, POSE_CHANNELS};
use crate::error::{Error, Result};

/// Pose rendering parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RasterOptions {
    /// Gaussian joint radius in pixels.
    pub sigma: f64,
    /// Half thickness of limb strokes in pixels.
    pub limb_half_width: f64,
}

impl Default for RasterOptions {
    fn default() -> Self {
        Self {
            sigma: 6.0,
            limb_half_width: 1.0,
        }
    }
}

impl RasterOptions {
    /// Defaults rescaled from the 448 px working size to `size`.
    pub fn for_working_size(size: usize) -> Self {
        let s = size as f64 / 448.0;
        Self {
            sigma: (6.0 * s).max(1.0),
            limb_half_width: (1.0 * s).max(0.5),
        }
    }
}

/// Channel-major `(N + L) × H × W` joint heatmaps followed by limb maps.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl PoseMap {
    pub const CHANNELS: usize = POSE_CHANNELS;

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }
}

fn point_segment_distance(px: f64, py: f64, ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (ax + t * dx - px, ay + t * dy - py);
    (cx * cx + cy * cy).sqrt()
}

/// Renders Gaussian joint heatmaps (pixel centres at integer coordinates)
/// and anti-aliased limb strokes. Undetected joints give all-zero channels;
/// a limb is drawn only when both of its joints are detected.
pub fn rasterize_pose(frame: &PoseFrame, height: usize, width: usize, opts: &RasterOptions) -> Result<PoseMap> {
    if height == 0 || width == 0 {
        return Err(Error::invalid("pose map dimensions must be positive"));
    }
    if !(opts.sigma > 0.0) {
        return Err(Error::invalid("sigma must be positive"));
    }
    let plane = height * width;
    let mut data = vec![0f32; POSE_CHANNELS * plane];
    let inv = 1.0 / (2.0 * opts.sigma * opts.sigma);
    for (j, kp) in frame.keypoints.iter().enumerate() {
        if !kp.is_detected() {
            continue;
        }
        let ch = &mut data[j * plane..(j + 1) * plane];
        for v in 0..height {
            let dy = v as f64 - kp.y;
            for u in 0..width {
                let dx = u as f64 - kp.x;
                ch[v * width + u] = (-(dx * dx + dy * dy) * inv).exp() as f32;
            }
        }
    }
    for (l, &(a, b)) in LIMBS.iter().enumerate() {
        let (ka, kb) = (frame.keypoints[a], frame.keypoints[b]);
        if !(ka.is_detected() && kb.is_detected()) {
            continue;
        }
        let c = NUM_JOINTS + l;
        let ch = &mut data[c * plane..(c + 1) * plane];
        for v in 0..height {
            for u in 0..width {
                let d = point_segment_distance(u as f64, v as f64, ka.x, ka.y, kb.x, kb.y);
                ch[v * width + u] = (opts.limb_half_width + 0.5 - d).clamp(0.0, 1.0) as f32;
            }
        }
    }
    Ok(PoseMap { height, width, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::Keypoint;

    fn single(x: f64, y: f64, c: f64) -> PoseFrame {
        let mut kps = [Keypoint::default(); NUM_JOINTS];
        kps[0] = Keypoint::new(x, y, c);
        PoseFrame { keypoints: kps }
    }

    fn opts(sigma: f64) -> RasterOptions {
        RasterOptions {
            sigma,
            limb_half_width: 1.0,
        }
    }

    #[test]
    fn peak_and_neighbour() {
        let map = rasterize_pose(&single(5.0, 5.0, 1.0), 12, 12, &opts(1.0)).unwrap();
        assert_eq!(map.at(0, 5, 5), 1.0);
        assert!((map.at(0, 5, 6) as f64 - (-0.5f64).exp()).abs() < 1e-6);
        assert!((map.at(0, 5, 6) - 0.6065).abs() < 1e-4);
    }

    #[test]
    fn undetected_joint_is_blank() {
        let map = rasterize_pose(&single(5.0, 5.0, 0.0), 12, 12, &opts(1.0)).unwrap();
        assert!(map.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn limb_drawn_between_detected_joints() {
        let mut kps = [Keypoint::default(); NUM_JOINTS];
        kps[1] = Keypoint::new(2.0, 2.0, 1.0);
        kps[2] = Keypoint::new(12.0, 2.0, 1.0);
        let map = rasterize_pose(&PoseFrame { keypoints: kps }, 16, 16, &opts(1.0)).unwrap();
        let limb = NUM_JOINTS; // (1, 2) is the first limb
        assert_eq!(map.at(limb, 2, 7), 1.0);
        assert_eq!(map.at(limb, 10, 7), 0.0);
        // Neck-to-left-shoulder limb has a missing endpoint.
        assert!(map.channel(limb + 1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn invalid_dims_rejected() {
        assert!(rasterize_pose(&single(1.0, 1.0, 1.0), 0, 4, &opts(1.0)).is_err());
        assert!(rasterize_pose(&single(1.0, 1.0, 1.0), 4, 4, &opts(0.0)).is_err());
    }

    proptest::proptest! {
        #[test]
        fn values_bounded_and_mass_monotone_in_sigma(
            x in -5.0f64..25.0, y in -5.0f64..25.0, s1 in 0.3f64..6.0, ds in 0.0f64..4.0,
        ) {
            let a = rasterize_pose(&single(x, y, 1.0), 20, 20, &opts(s1)).unwrap();
            let b = rasterize_pose(&single(x, y, 1.0), 20, 20, &opts(s1 + ds)).unwrap();
            proptest::prop_assert!(a.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
            let sa: f64 = a.channel(0).iter().map(|&v| v as f64).sum();
            let sb: f64 = b.channel(0).iter().map(|&v| v as f64).sum();
            proptest::prop_assert!(sb + 1e-6 >= sa);
        }
    }
}
