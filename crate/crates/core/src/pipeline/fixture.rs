//! A small synthetic dataset: a body model dancing over a textured
//! background, with parsing maps, keypoints, a manifest and a tiny config.

use std::path::{Path, PathBuf};

use super::{DatasetManifest, PipelineConfig, Split, VideoEntry};
use crate::error::{Error, Result};
use crate::flow::{body_faces, dance_pose, render_faces, BodyModel, FlowNetConfig};
use crate::foreground::{DiscConfig, DualPathConfig};
use crate::fusion::FusionNetConfig;
use crate::nn::PerceptualSpec;
use crate::pose::{write_keypoint_file, PoseSequence, SmoothingConfig};
use crate::region::{write_frame_png, write_parsing_png, Frame};

/// Paths written by [`synthetic_fixture`].
#[derive(Debug, Clone)]
pub struct Fixture {
    pub root: PathBuf,
    pub manifest: PathBuf,
    pub config: PathBuf,
    pub appearance: PathBuf,
    pub appearance_parsing: PathBuf,
    pub appearance_pose: PathBuf,
    pub source_poses: PathBuf,
    pub background: PathBuf,
}

/// Sidecar paths `name.parsing.png` and `name.pose.txt` next to an
/// appearance image.
pub fn appearance_sidecars(image: &Path) -> (PathBuf, PathBuf) {
    (image.with_extension("parsing.png"), image.with_extension("pose.txt"))
}

/// Stage settings small enough for seconds-long CPU runs at `size` pixels.
pub fn tiny_config(size: usize) -> PipelineConfig {
    let mut c = PipelineConfig {
        working_size: size,
        seed: 7,
        smoothing: SmoothingConfig { window: 5, polyorder: 2 },
        ..Default::default()
    };
    let perceptual = PerceptualSpec::Random {
        seed: 0,
        widths: vec![4, 8],
    };
    c.parsing.image_size = size;
    c.parsing.base_width = 4;
    c.parsing.res_blocks = 1;
    c.parsing.steps = Some(2);
    c.flow.net = FlowNetConfig {
        depth: 3,
        base_width: 4,
        max_width: 8,
        flow_scale: 4.0,
    };
    c.flow.batch_size = 2;
    c.flow.steps = Some(2);
    c.foreground.generator = DualPathConfig {
        base_width: 4,
        max_width: 8,
        levels: 2,
        bottleneck_blocks: 1,
        ..Default::default()
    };
    c.foreground.discriminator = DiscConfig {
        base_width: 4,
        max_width: 8,
        downsamples: 2,
    };
    c.foreground.batch_size = 2;
    c.foreground.steps = Some(2);
    c.foreground.perceptual = perceptual.clone();
    c.fusion.network = FusionNetConfig {
        base_width: 4,
        res_blocks: 1,
        downscale: 1,
    };
    c.fusion.steps = Some(2);
    c.fusion.perceptual = perceptual;
    c
}

fn background(h: usize, w: usize) -> Frame {
    Frame::from_fn(h, w, |y, x| {
        let (fx, fy) = (x as f32 / w as f32, y as f32 / h as f32);
        [0.35 + 0.3 * fx, 0.45 + 0.2 * (fy * 9.0).sin(), 0.55 - 0.25 * fy]
    })
}

/// Writes a `frames`-long video of `height × width` pixels plus an
/// appearance image into `root`, with `manifest.json` and `config.json`
/// (working size `size`).
pub fn synthetic_fixture(root: &Path, frames: usize, height: usize, width: usize, size: usize) -> Result<Fixture> {
    if frames == 0 || height < 16 || width < 16 {
        return Err(Error::invalid("fixture needs at least one 16x16 frame"));
    }
    let cfg = tiny_config(size);
    cfg.validate()?;
    let video = root.join("dance");
    let bg = background(height, width);
    let body_h = height as f64 * 0.75;
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
    let poses: Vec<_> = (0..frames)
        .map(|t| dance_pose(cx + 0.04 * width as f64 * (t as f64 * 0.6).sin(), cy, body_h, t as f64 * 0.35))
        .collect();
    let model = BodyModel::for_pose(&poses[0]);
    for (t, p) in poses.iter().enumerate() {
        let r = render_faces(&body_faces(p, &model), height, width, Some(&bg), cfg.num_classes())?;
        write_frame_png(&video.join("frames").join(format!("{t:05}.png")), &r.frame)?;
        write_parsing_png(&video.join("parsing").join(format!("{t:05}.png")), &r.parsing)?;
    }
    let source_poses = video.join("poses.txt");
    write_keypoint_file(&source_poses, &PoseSequence::new(poses, cfg.fps)?)?;
    let background_path = video.join("background.png");
    write_frame_png(&background_path, &bg)?;

    let app_pose = dance_pose(cx, cy, body_h, 1.3);
    let app = render_faces(&body_faces(&app_pose, &model), height, width, Some(&bg), cfg.num_classes())?;
    let appearance = root.join("appearance.png");
    let (appearance_parsing, appearance_pose) = appearance_sidecars(&appearance);
    write_frame_png(&appearance, &app.frame)?;
    write_parsing_png(&appearance_parsing, &app.parsing)?;
    write_keypoint_file(&appearance_pose, &PoseSequence::new(vec![app_pose], cfg.fps)?)?;

    let manifest = DatasetManifest {
        videos: vec![VideoEntry {
            name: "dance".into(),
            frames: "dance/frames".into(),
            keypoints: "dance/poses.txt".into(),
            parsing: "dance/parsing".into(),
            background: "dance/background.png".into(),
            appearance_index: None,
            width,
            height,
            split: Split::Train,
        }],
    };
    let manifest_path = root.join("manifest.json");
    manifest.save(&manifest_path)?;
    let config = root.join("config.json");
    cfg.save(&config)?;
    Ok(Fixture {
        root: root.to_path_buf(),
        manifest: manifest_path,
        config,
        appearance,
        appearance_parsing,
        appearance_pose,
        source_poses,
        background: background_path,
    })
}
