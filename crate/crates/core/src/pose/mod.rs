//! Keypoint annotations: loading, temporal smoothing, appearance-frame
//! selection and rasterization into network-ready pose maps.

mod io;
mod raster;
mod savgol;

pub use io::{format_keypoints, parse_keypoints, read_keypoint_file, write_keypoint_file};
pub use raster::{rasterize_pose, PoseMap, RasterOptions};
pub use savgol::{savgol_coefficients, smooth_sequence, SmoothingConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of body joints per frame (OpenPose COCO-18 layout).
pub const NUM_JOINTS: usize = 18;

/// Joint names in file order.
pub const JOINT_NAMES: [&str; NUM_JOINTS] = [
    "nose",
    "neck",
    "right_shoulder",
    "right_elbow",
    "right_wrist",
    "left_shoulder",
    "left_elbow",
    "left_wrist",
    "right_hip",
    "right_knee",
    "right_ankle",
    "left_hip",
    "left_knee",
    "left_ankle",
    "right_eye",
    "left_eye",
    "right_ear",
    "left_ear",
];

/// Joint pairs drawn as limb channels in a [`PoseMap`].
pub const LIMBS: [(usize, usize); 17] = [
    (1, 2),
    (1, 5),
    (2, 3),
    (3, 4),
    (5, 6),
    (6, 7),
    (1, 8),
    (8, 9),
    (9, 10),
    (1, 11),
    (11, 12),
    (12, 13),
    (1, 0),
    (0, 14),
    (14, 16),
    (0, 15),
    (15, 17),
];

/// Channel count of a rasterized pose: one heatmap per joint plus one map per limb.
pub const POSE_CHANNELS: usize = NUM_JOINTS + LIMBS.len();

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    /// Detector confidence in `[0, 1]`; exactly zero means undetected.
    pub confidence: f64,
}

impl Keypoint {
    pub fn new(x: f64, y: f64, confidence: f64) -> Self {
        Self { x, y, confidence }
    }

    pub fn is_detected(&self) -> bool {
        self.confidence > 0.0
    }

    fn validate(&self) -> Result<()> {
        if !(self.x.is_finite() && self.y.is_finite()) {
            return Err(Error::invalid("keypoint coordinates must be finite"));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::invalid(format!(
                "keypoint confidence {} outside [0, 1]",
                self.confidence
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PoseFrame {
    pub keypoints: [Keypoint; NUM_JOINTS],
}

impl PoseFrame {
    pub fn new(keypoints: [Keypoint; NUM_JOINTS]) -> Result<Self> {
        for kp in &keypoints {
            kp.validate()?;
        }
        Ok(Self { keypoints })
    }

    pub fn confidence_sum(&self) -> f64 {
        self.keypoints.iter().map(|k| k.confidence).sum()
    }

    /// Applies a coordinate transform to every detected keypoint.
    pub fn map_coords(&self, f: impl Fn(f64, f64) -> (f64, f64)) -> PoseFrame {
        let mut out = *self;
        for kp in out.keypoints.iter_mut().filter(|k| k.is_detected()) {
            let (x, y) = f(kp.x, kp.y);
            kp.x = x;
            kp.y = y;
        }
        out
    }

    /// Tight `(min_x, min_y, max_x, max_y)` box over detected joints.
    pub fn bounds(&self) -> Option<(f64, f64, f64, f64)> {
        self.keypoints
            .iter()
            .filter(|k| k.is_detected())
            .fold(None, |acc, k| {
                Some(match acc {
                    None => (k.x, k.y, k.x, k.y),
                    Some((x0, y0, x1, y1)) => (x0.min(k.x), y0.min(k.y), x1.max(k.x), y1.max(k.y)),
                })
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseSequence {
    pub frames: Vec<PoseFrame>,
    pub fps: f64,
}

impl PoseSequence {
    pub fn new(frames: Vec<PoseFrame>, fps: f64) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::invalid("pose sequence must contain at least one frame"));
        }
        Ok(Self { frames, fps })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Index of the frame whose keypoint confidences sum highest; ties go to
/// the earliest frame.
pub fn select_appearance_frame(seq: &PoseSequence) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (t, frame) in seq.frames.iter().enumerate() {
        let sum = frame.confidence_sum();
        match best {
            Some((_, b)) if sum <= b => {}
            _ => best = Some((t, sum)),
        }
    }
    best.map(|(t, _)| t)
        .ok_or_else(|| Error::invalid("cannot select an appearance frame from an empty sequence"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame_with_confidences(c: &[f64]) -> PoseFrame {
        let mut kps = [Keypoint::default(); NUM_JOINTS];
        for (k, &c) in kps.iter_mut().zip(c) {
            k.confidence = c;
        }
        PoseFrame::new(kps).unwrap()
    }

    fn frame_with_sum(sum: f64) -> PoseFrame {
        frame_with_confidences(&vec![sum / NUM_JOINTS as f64; NUM_JOINTS])
    }

    #[test]
    fn appearance_frame_is_argmax() {
        let seq = PoseSequence::new(
            vec![frame_with_sum(10.2), frame_with_sum(17.9), frame_with_sum(14.1)],
            30.0,
        )
        .unwrap();
        assert_eq!(select_appearance_frame(&seq).unwrap(), 1);
    }

    #[test]
    fn appearance_frame_ties_go_to_first() {
        let seq = PoseSequence::new(vec![frame_with_sum(9.0); 4], 30.0).unwrap();
        assert_eq!(select_appearance_frame(&seq).unwrap(), 0);
    }

    #[test]
    fn appearance_frame_matches_summation_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let confs: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..NUM_JOINTS).map(|_| rng.gen::<f64>()).collect())
                .collect();
            let mut best = 0;
            let mut best_sum = f64::NEG_INFINITY;
            for (t, c) in confs.iter().enumerate() {
                let mut s = 0.0;
                for v in c {
                    s += v;
                }
                if s > best_sum {
                    best_sum = s;
                    best = t;
                }
            }
            let seq = PoseSequence::new(
                confs.iter().map(|c| frame_with_confidences(c)).collect(),
                25.0,
            )
            .unwrap();
            assert_eq!(select_appearance_frame(&seq).unwrap(), best);
        }
    }

    #[test]
    fn empty_sequence_is_rejected() {
        assert!(PoseSequence::new(vec![], 30.0).is_err());
        let seq = PoseSequence {
            frames: vec![],
            fps: 30.0,
        };
        assert!(matches!(
            select_appearance_frame(&seq),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn confidence_out_of_range_is_rejected() {
        let mut kps = [Keypoint::default(); NUM_JOINTS];
        kps[3].confidence = 1.5;
        assert!(PoseFrame::new(kps).is_err());
        kps[3].confidence = 0.5;
        kps[2].x = f64::NAN;
        assert!(PoseFrame::new(kps).is_err());
    }

    proptest::proptest! {
        #[test]
        fn appearance_selection_ignores_joint_order(
            confs in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, NUM_JOINTS), 1..6),
            rot in 0usize..NUM_JOINTS,
        ) {
            let frames: Vec<PoseFrame> = confs.iter().map(|c| frame_with_confidences(c)).collect();
            let permuted: Vec<PoseFrame> = confs
                .iter()
                .map(|c| {
                    let mut c = c.clone();
                    c.rotate_left(rot);
                    c.reverse();
                    frame_with_confidences(&c)
                })
                .collect();
            let a = select_appearance_frame(&PoseSequence::new(frames, 30.0).unwrap()).unwrap();
            let b = select_appearance_frame(&PoseSequence::new(permuted, 30.0).unwrap()).unwrap();
            // Summation order can perturb the last bit; only compare clear winners.
            let sums: Vec<f64> = confs.iter().map(|c| c.iter().sum()).collect();
            let top = sums[a];
            let contested = sums.iter().enumerate().any(|(t, s)| t != a && (s - top).abs() < 1e-9);
            if !contested {
                proptest::prop_assert_eq!(a, b);
            }
        }
    }
}
