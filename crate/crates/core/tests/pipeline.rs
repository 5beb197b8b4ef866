use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use motionflow::pipeline::*;
use motionflow::pose::{read_keypoint_file, select_appearance_frame};
use motionflow::region::{read_frame_png, read_parsing_png};

fn cli(root: &Path, args: &[&str]) -> i32 {
    let mut argv = vec!["motionflow"];
    argv.extend_from_slice(args);
    run_command_in(argv, root.to_path_buf())
}

fn file_bytes(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn prepare_is_idempotent_and_delegates_appearance_selection() {
    let dir = tempfile::tempdir().unwrap();
    let fx = synthetic_fixture(dir.path(), 10, 64, 64, 64).unwrap();
    assert_eq!(cli(dir.path(), &["prepare"]), 0);
    let first = file_bytes(&dir.path().join("prepared"));
    assert_eq!(cli(dir.path(), &["prepare"]), 0);
    assert_eq!(first, file_bytes(&dir.path().join("prepared")));

    let videos = load_prepared(&dir.path().join("prepared")).unwrap();
    assert_eq!(videos.len(), 1);
    let v = &videos[0];
    let raw = read_keypoint_file(&fx.source_poses, 30.0).unwrap();
    assert_eq!(v.appearance_index, select_appearance_frame(&raw).unwrap());
    assert_eq!(v.frames, 10);
    for t in 0..v.frames {
        let (crop, parsing, rec) = v.crop(t).unwrap();
        assert_eq!((crop.height, crop.width, parsing.height, parsing.width), (64, 64, 64, 64));
        assert_eq!(rec.target(), 64);
    }
}

#[test]
fn prepare_reports_broken_videos_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let fx = synthetic_fixture(dir.path(), 6, 48, 48, 32).unwrap();
    let mut m = DatasetManifest::load(&fx.manifest).unwrap();
    let mut broken = m.videos[0].clone();
    broken.name = "broken".into();
    broken.keypoints = dir.path().join("missing.txt");
    m.videos.push(broken);
    let cfg = PipelineConfig::load(&fx.config).unwrap();
    let report = prepare(&m, &cfg, &dir.path().join("out")).unwrap();
    assert_eq!(report.prepared, vec!["dance".to_string()]);
    assert_eq!(report.failed.len(), 1);
    assert_eq!(report.failed[0].kind, "io");
}

#[test]
fn train_transfer_and_evaluate_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let fx = synthetic_fixture(root, 10, 64, 64, 64).unwrap();
    assert_eq!(cli(root, &["prepare"]), 0);
    for stage in ["parsing", "flow", "foreground", "fusion"] {
        assert_eq!(cli(root, &["train", stage, "--seed", "3"]), 0, "{stage}");
        assert!(root.join("models").join(format!("{stage}.safetensors")).is_file());
    }
    let app = fx.appearance.to_str().unwrap();
    let src = fx.source_poses.to_str().unwrap();
    let bg = fx.background.to_str().unwrap();
    let run = |out: &str, extra: &[&str]| {
        let out = root.join(out);
        let mut args = vec!["transfer", "--appearance", app, "--source", src, "--background", bg, "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        assert_eq!(cli(root, &args), 0);
        out
    };
    let hashes = |out: &Path| {
        let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("transfer.json")).unwrap()).unwrap();
        r["frames"].clone()
    };
    let a = run("a", &["--seed", "7"]);
    let b = run("b", &["--seed", "7"]);
    assert_eq!(hashes(&a), hashes(&b));
    let frames = list_frames(&a).unwrap();
    assert_eq!(frames.len(), 10);
    let shape = |p: &Path| {
        let f = read_frame_png(p).unwrap();
        (f.height, f.width)
    };
    for ablation in ["--no-flow", "--no-fusion"] {
        let out = run(&ablation[2..], &["--seed", "7", ablation]);
        let got = list_frames(&out).unwrap();
        assert_eq!(got.len(), 10);
        assert_eq!(shape(&got[0]), shape(&frames[0]));
    }

    let real = root.join("dance").join("frames");
    let code = cli(
        root,
        &["eval", "fvd", "--real", real.to_str().unwrap(), "--fake", a.to_str().unwrap(), "--clip-len", "10"],
    );
    // One video per side cannot define a covariance.
    assert_eq!(code, 1);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli(dir.path(), &["dance"]), 2);
    assert_eq!(cli(dir.path(), &["transfer", "--bogus"]), 2);
    assert_eq!(cli(dir.path(), &["train", "everything"]), 2);
    assert_eq!(cli(dir.path(), &["--help"]), 0);
    assert_eq!(cli(dir.path(), &["prepare"]), 1);
}

#[test]
fn transfer_without_checkpoints_uses_seeded_models() {
    let dir = tempfile::tempdir().unwrap();
    let fx = synthetic_fixture(dir.path(), 10, 64, 64, 64).unwrap();
    let cfg = PipelineConfig::load(&fx.config).unwrap();
    let app = AppearanceInput {
        frame: read_frame_png(&fx.appearance).unwrap(),
        parsing: read_parsing_png(&fx.appearance_parsing, cfg.num_classes()).unwrap(),
        pose: read_keypoint_file(&fx.appearance_pose, 30.0).unwrap().frames[0],
    };
    let poses = smooth_poses(&read_keypoint_file(&fx.source_poses, 30.0).unwrap(), &cfg.smoothing).unwrap();
    let bg = read_frame_png(&fx.background).unwrap();
    let models = StageModels::load_or_init(None, &cfg, 7).unwrap();
    let out = transfer(&app, &poses, &models, &bg, &cfg).unwrap();
    assert_eq!(out.frames.len(), 10);
    for (t, f) in out.frames.iter().enumerate() {
        assert_eq!((f.height, f.width), (64, 64));
        assert!(f.data.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(out.parsings[t].labels.iter().all(|&l| (l as usize) < cfg.num_classes()));
        assert!(out.masks[t].data.iter().all(|&m| m == 0.0 || m == 1.0));
    }
    let bootstrap = motionflow::region::composite(&out.foregrounds[0], &bg, &out.masks[0]).unwrap();
    assert_eq!(out.frames[0], bootstrap);
}

#[test]
fn minimal_transfer_invocation_and_fvd_report() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let fx = synthetic_fixture(root, 6, 48, 48, 32).unwrap();
    let out = root.join("out");
    let args = [
        "transfer",
        "--appearance",
        fx.appearance.to_str().unwrap(),
        "--source",
        fx.source_poses.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    assert_eq!(cli(root, &args), 0);
    assert_eq!(list_frames(&out).unwrap().len(), 6);

    let set = root.join("set");
    for v in ["v0", "v1", "v2"] {
        let d = set.join(v);
        std::fs::create_dir_all(&d).unwrap();
        for f in list_frames(&root.join("dance").join("frames")).unwrap() {
            std::fs::copy(&f, d.join(f.file_name().unwrap())).unwrap();
        }
    }
    std::fs::copy(root.join("out").join("00000.png"), set.join("v2").join("00000.png")).unwrap();
    let s = set.to_str().unwrap();
    assert_eq!(cli(root, &["eval", "fvd", "--real", s, "--fake", s, "--clip-len", "6"]), 0);
    assert_eq!(cli(root, &["eval", "fvd", "--real", s, "--fake", s, "--embedder", "i3d:/nonexistent"]), 1);
    assert_eq!(cli(root, &["eval", "fvd", "--real", s, "--fake", s, "--embedder", "alexnet"]), 1);
}
