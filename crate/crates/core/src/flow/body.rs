use super::Face;
use crate::pose::{Keypoint, PoseFrame, NUM_JOINTS};

/// One rigid piece of the synthetic body.
#[derive(Debug, Clone, Copy)]
pub struct BodyPart {
    pub name: &'static str,
    /// Joints spanning the part. Two joints make a limb segment, four make a
    /// quad (`[a, b, c, d]` in winding order), one makes a head square
    /// (sized from its distance to the neck).
    pub joints: &'static [usize],
    pub depth: f32,
    /// Label in the 20-class human-parsing scheme.
    pub label: u8,
    pub base_color: [f32; 3],
}

/// Parts in draw order. Depth separates overlapping parts: the right arm is
/// in front of the torso and the left arm behind it, which produces
/// self-occlusion for crossing poses.
pub const BODY_PARTS: [BodyPart; 11] = [
    BodyPart { name: "torso", joints: &[2, 5, 11, 8], depth: 2.0, label: 5, base_color: [0.80, 0.25, 0.20] },
    BodyPart { name: "head", joints: &[0], depth: 1.8, label: 13, base_color: [0.95, 0.80, 0.65] },
    BodyPart { name: "right_upper_arm", joints: &[2, 3], depth: 1.0, label: 15, base_color: [0.90, 0.70, 0.55] },
    BodyPart { name: "right_forearm", joints: &[3, 4], depth: 0.9, label: 15, base_color: [0.85, 0.65, 0.50] },
    BodyPart { name: "left_upper_arm", joints: &[5, 6], depth: 3.0, label: 14, base_color: [0.90, 0.72, 0.58] },
    BodyPart { name: "left_forearm", joints: &[6, 7], depth: 3.1, label: 14, base_color: [0.86, 0.66, 0.52] },
    BodyPart { name: "right_thigh", joints: &[8, 9], depth: 1.9, label: 9, base_color: [0.20, 0.25, 0.60] },
    BodyPart { name: "right_shin", joints: &[9, 10], depth: 1.85, label: 17, base_color: [0.25, 0.30, 0.65] },
    BodyPart { name: "left_thigh", joints: &[11, 12], depth: 2.1, label: 9, base_color: [0.18, 0.22, 0.55] },
    BodyPart { name: "left_shin", joints: &[12, 13], depth: 2.15, label: 16, base_color: [0.22, 0.27, 0.60] },
    BodyPart { name: "neck", joints: &[1, 0], depth: 1.95, label: 13, base_color: [0.92, 0.76, 0.60] },
];

/// Geometry of the synthetic body.
#[derive(Debug, Clone, Copy)]
pub struct BodyModel {
    /// Limb thickness in pixels.
    pub limb_width: f32,
    /// Subdivisions along each limb.
    pub segments: usize,
}

impl BodyModel {
    /// Thickness proportional to the torso length of `pose`.
    pub fn for_pose(pose: &PoseFrame) -> Self {
        let kp = &pose.keypoints;
        let torso = ((kp[1].x - (kp[8].x + kp[11].x) / 2.0).powi(2)
            + (kp[1].y - (kp[8].y + kp[11].y) / 2.0).powi(2))
        .sqrt();
        Self {
            limb_width: (torso as f32 * 0.28).max(1.5),
            segments: 3,
        }
    }
}

/// Deterministic vertex colour: a part-specific base tone modulated by the
/// vertex's position on the part surface.
fn vertex_color(part: &BodyPart, u: f32, v: f32) -> [f32; 3] {
    let s = (u * 7.3 + v * 3.1).sin() * 0.5 + 0.5;
    let t = (u * 2.2 - v * 5.7).cos() * 0.5 + 0.5;
    [
        (part.base_color[0] * (0.6 + 0.4 * s)).clamp(0.0, 1.0),
        (part.base_color[1] * (0.6 + 0.4 * t)).clamp(0.0, 1.0),
        (part.base_color[2] * (0.7 + 0.3 * s * t)).clamp(0.0, 1.0),
    ]
}

fn push_quad(
    faces: &mut Vec<Face>,
    id: u32,
    part: &BodyPart,
    corners: [[f32; 2]; 4],
    uvs: [[f32; 2]; 4],
) {
    let col = uvs.map(|uv| vertex_color(part, uv[0], uv[1]));
    faces.push(Face {
        id,
        vertices: [corners[0], corners[1], corners[2]],
        depth: part.depth,
        colors: [col[0], col[1], col[2]],
        label: part.label,
    });
    faces.push(Face {
        id: id + 1,
        vertices: [corners[0], corners[2], corners[3]],
        depth: part.depth,
        colors: [col[0], col[2], col[3]],
        label: part.label,
    });
}

fn pt(k: &Keypoint) -> [f32; 2] {
    [k.x as f32, k.y as f32]
}

/// Triangulates the synthetic body for `pose`. Face ids depend only on the
/// part and sub-face index, so two poses of the same body share identities.
/// Parts with an undetected joint are omitted.
pub fn body_faces(pose: &PoseFrame, model: &BodyModel) -> Vec<Face> {
    let kp = &pose.keypoints;
    let mut faces = Vec::new();
    for (pi, part) in BODY_PARTS.iter().enumerate() {
        if part.joints.iter().any(|&j| !kp[j].is_detected()) {
            continue;
        }
        let base = pi as u32 * 100;
        match part.joints {
            [a, b, c, d] => {
                let corners = [pt(&kp[*a]), pt(&kp[*b]), pt(&kp[*c]), pt(&kp[*d])];
                push_quad(&mut faces, base, part, corners, [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]);
            }
            [head] => {
                let (h, n) = (pt(&kp[*head]), pt(&kp[1]));
                let r = if kp[1].is_detected() {
                    (((h[0] - n[0]).powi(2) + (h[1] - n[1]).powi(2)).sqrt() * 0.6).max(1.5)
                } else {
                    model.limb_width
                };
                let corners = [
                    [h[0] - r, h[1] - r],
                    [h[0] + r, h[1] - r],
                    [h[0] + r, h[1] + r],
                    [h[0] - r, h[1] + r],
                ];
                push_quad(&mut faces, base, part, corners, [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]);
            }
            [a, b] => {
                let (pa, pb) = (pt(&kp[*a]), pt(&kp[*b]));
                let (dx, dy) = (pb[0] - pa[0], pb[1] - pa[1]);
                let len = (dx * dx + dy * dy).sqrt();
                if len < 1e-3 {
                    continue;
                }
                let half = model.limb_width * 0.5;
                let (nx, ny) = (-dy / len * half, dx / len * half);
                let segs = model.segments.max(1);
                for s in 0..segs {
                    let t0 = s as f32 / segs as f32;
                    let t1 = (s + 1) as f32 / segs as f32;
                    let c0 = [pa[0] + dx * t0, pa[1] + dy * t0];
                    let c1 = [pa[0] + dx * t1, pa[1] + dy * t1];
                    let corners = [
                        [c0[0] + nx, c0[1] + ny],
                        [c0[0] - nx, c0[1] - ny],
                        [c1[0] - nx, c1[1] - ny],
                        [c1[0] + nx, c1[1] + ny],
                    ];
                    push_quad(
                        &mut faces,
                        base + 2 * s as u32,
                        part,
                        corners,
                        [[t0, 0.0], [t0, 1.0], [t1, 1.0], [t1, 0.0]],
                    );
                }
            }
            _ => unreachable!("part joint lists have 1, 2 or 4 entries"),
        }
    }
    faces
}

/// A parametric dancing pose: standing figure of height `height` centred at
/// `(cx, cy)`, with arms and legs swinging as `phase` advances.
pub fn dance_pose(cx: f64, cy: f64, height: f64, phase: f64) -> PoseFrame {
    let u = height / 8.0;
    let (s, c) = (phase.sin(), phase.cos());
    let mut k = [Keypoint::default(); NUM_JOINTS];
    let mut set = |j: usize, x: f64, y: f64| k[j] = Keypoint::new(cx + x * u, cy + y * u, 1.0);
    set(1, 0.0, -2.6); // neck
    set(0, 0.1 * s, -3.3); // nose
    set(14, -0.2, -3.45);
    set(15, 0.2, -3.45);
    set(16, -0.4, -3.35);
    set(17, 0.4, -3.35);
    set(2, -0.9, -2.5); // right shoulder
    set(5, 0.9, -2.5); // left shoulder
    set(3, -1.5 - 0.3 * c, -1.4 - 0.6 * s); // right elbow
    set(4, -1.2 - 0.9 * c, -0.3 - 1.6 * s); // right wrist swings across the body
    set(6, 1.5 + 0.3 * s, -1.4 + 0.5 * c);
    set(7, 1.1 + 0.8 * s, -0.4 + 1.2 * c);
    set(8, -0.55, 0.2); // right hip
    set(11, 0.55, 0.2);
    set(9, -0.65 - 0.25 * s, 1.9);
    set(10, -0.7 - 0.45 * s, 3.6);
    set(12, 0.65 + 0.25 * c, 1.9);
    set(13, 0.7 + 0.45 * c, 3.6);
    PoseFrame { keypoints: k }
}
