use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use super::{
    appearance_sidecars, fusion_clips, foreground_samples, flow_samples, load_prepared, mux_video, parsing_samples, prepare,
    smooth_poses, transfer, write_frames, AppearanceInput, DatasetManifest, PipelineConfig, StageModels,
};
use crate::error::{Error, Result};
use crate::flow::train_flow_stage;
use crate::foreground::train_foreground_stage;
use crate::fusion::train_fusion_stage;
use crate::fvd::{compute_fvd, EmbedderSpec};
use crate::parsing::train_parsing_stage;
use crate::pose::read_keypoint_file;
use crate::region::{read_frame_png, read_parsing_png, Frame};

/// Environment variable naming the data root.
pub const DATA_ROOT_ENV: &str = "MOTIONFLOW_DATA_ROOT";

#[derive(Debug, Parser)]
#[command(name = "motionflow", version, about = "Parsing- and flow-guided human motion transfer")]
struct Cli {
    /// Pipeline config (JSON); defaults to `<data root>/config.json` when present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Stage {
    Parsing,
    Flow,
    Foreground,
    Fusion,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Smooth poses and write working-size crops for every manifest video.
    Prepare {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one stage on a prepared dataset.
    Train {
        #[arg(value_enum)]
        stage: Stage,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Model folder; the checkpoint is written as `<out>/<stage>`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        no_flow: bool,
    },
    /// Animate an appearance image with a source pose sequence.
    Transfer {
        #[arg(long)]
        appearance: PathBuf,
        /// Defaults to `<appearance>.parsing.png`.
        #[arg(long)]
        appearance_parsing: Option<PathBuf>,
        /// Defaults to `<appearance>.pose.txt` (first line used).
        #[arg(long)]
        appearance_pose: Option<PathBuf>,
        #[arg(long)]
        source: PathBuf,
        /// Defaults to a black frame the size of the appearance image.
        #[arg(long)]
        background: Option<PathBuf>,
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        no_flow: bool,
        #[arg(long)]
        no_fusion: bool,
        /// Also encode the frames with ffmpeg.
        #[arg(long)]
        video: Option<PathBuf>,
    },
    /// Evaluation metrics.
    Eval {
        #[command(subcommand)]
        metric: Metric,
    },
}

#[derive(Debug, Subcommand)]
enum Metric {
    /// Fréchet video distance between two folders of videos.
    Fvd {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        fake: PathBuf,
        /// `random` or `i3d:<weights.safetensors>`.
        #[arg(long, default_value = "random")]
        embedder: String,
        #[arg(long, default_value_t = crate::fvd::DEFAULT_CLIP_LEN)]
        clip_len: usize,
    },
}

struct Context {
    root: PathBuf,
    config: PipelineConfig,
}

impl Context {
    fn new(root: PathBuf, explicit: Option<&Path>) -> Result<Self> {
        let default = root.join("config.json");
        let config = match explicit {
            Some(p) => PipelineConfig::load(p)?,
            None if default.is_file() => PipelineConfig::load(&default)?,
            None => PipelineConfig::default(),
        };
        Ok(Self { root, config })
    }

    fn or_root(&self, p: Option<PathBuf>, default: &str) -> PathBuf {
        p.unwrap_or_else(|| self.root.join(default))
    }
}

/// A folder of numbered PNGs is one video; otherwise each subfolder is.
pub fn read_videos(dir: &Path) -> Result<Vec<Vec<Frame>>> {
    let read = |d: &Path| -> Result<Vec<Frame>> { super::list_frames(d)?.iter().map(|p| read_frame_png(p)).collect() };
    let direct = super::list_frames(dir)?;
    if !direct.is_empty() {
        return Ok(vec![read(dir)?]);
    }
    let mut subdirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    subdirs.iter().map(|d| read(d)).collect()
}

fn save_report(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

fn execute(cli: Cli, root: PathBuf) -> Result<serde_json::Value> {
    let mut ctx = Context::new(root, cli.config.as_deref())?;
    match cli.command {
        Command::Prepare { manifest, out } => {
            let manifest = DatasetManifest::load(&ctx.or_root(manifest, "manifest.json"))?;
            let out = ctx.or_root(out, "prepared");
            let report = prepare(&manifest, &ctx.config, &out)?;
            if !report.failed.is_empty() {
                let names: Vec<&str> = report.failed.iter().map(|f| f.name.as_str()).collect();
                return Err(Error::invalid(format!("prepare failed for {}", names.join(", "))).in_stage("prepare"));
            }
            Ok(json!({ "prepared": report.prepared, "out": out }))
        }
        Command::Train { stage, data, out, seed, no_flow } => {
            let cfg = &mut ctx.config;
            cfg.no_flow |= no_flow;
            let seed = seed.unwrap_or(cfg.seed);
            let videos = load_prepared(&ctx.or_root(data, "prepared"))?;
            let out = ctx.or_root(out, "models");
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let cfg = &ctx.config;
            let (name, last) = match stage {
                Stage::Parsing => {
                    let samples = parsing_samples(&videos, cfg)?;
                    let (gen, report) = train_parsing_stage(&samples, &cfg.parsing, seed).map_err(|e| e.in_stage("parsing"))?;
                    gen.save(&out.join("parsing"), &cfg.parsing)?;
                    save_report(&out.join("parsing.report.json"), &report)?;
                    ("parsing", report.weighted.last())
                }
                Stage::Flow => {
                    let samples = flow_samples(&videos, cfg)?;
                    let (net, report) = train_flow_stage(&samples, &cfg.flow, seed).map_err(|e| e.in_stage("flow"))?;
                    net.save(&out.join("flow"), &cfg.flow)?;
                    save_report(&out.join("flow.report.json"), &report)?;
                    ("flow", report.total.last())
                }
                Stage::Foreground => {
                    let samples = foreground_samples(&videos, cfg)?;
                    let mut fcfg = cfg.foreground.clone();
                    fcfg.no_flow |= cfg.no_flow;
                    let (models, report) = train_foreground_stage(&samples, &fcfg, seed).map_err(|e| e.in_stage("foreground"))?;
                    models.save(&out.join("foreground"))?;
                    save_report(&out.join("foreground.report.json"), &report)?;
                    ("foreground", report.generator.last())
                }
                Stage::Fusion => {
                    let clips = fusion_clips(&videos, cfg, seed)?;
                    let (net, report) = train_fusion_stage(&clips, &cfg.fusion, seed).map_err(|e| e.in_stage("fusion"))?;
                    net.save(&out.join("fusion"), &cfg.fusion)?;
                    save_report(&out.join("fusion.report.json"), &report)?;
                    ("fusion", report.total.last())
                }
            };
            Ok(json!({ "stage": name, "checkpoint": out.join(name), "final_loss": last }))
        }
        Command::Transfer {
            appearance,
            appearance_parsing,
            appearance_pose,
            source,
            background,
            models,
            out,
            seed,
            no_flow,
            no_fusion,
            video,
        } => {
            let cfg = &mut ctx.config;
            cfg.no_flow |= no_flow;
            cfg.no_fusion |= no_fusion;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let (default_parsing, default_pose) = appearance_sidecars(&appearance);
            let frame = read_frame_png(&appearance)?;
            let parsing = read_parsing_png(&appearance_parsing.unwrap_or(default_parsing), cfg.num_classes())?;
            let pose = read_keypoint_file(&appearance_pose.unwrap_or(default_pose), cfg.fps)?.frames[0];
            let bg = match background {
                Some(p) => read_frame_png(&p)?,
                None => Frame::zeros(frame.height, frame.width),
            };
            let poses = smooth_poses(&read_keypoint_file(&source, cfg.fps)?, &cfg.smoothing)?;
            let models_dir = ctx.or_root(models, "models");
            let cfg = &ctx.config;
            let models = StageModels::load_or_init(Some(&models_dir), cfg, cfg.seed)?;
            let result = transfer(&AppearanceInput { frame, parsing, pose }, &poses, &models, &bg, cfg)?;
            let written = write_frames(&out, &result.frames)?;
            let report = json!({
                "frames": written,
                "seed": cfg.seed,
                "no_flow": cfg.no_flow,
                "no_fusion": cfg.no_fusion,
                "placement": result.placement,
            });
            save_report(&out.join("transfer.json"), &report)?;
            let muxed = match video {
                Some(v) => mux_video(&out, cfg.fps, &v)?.then_some(v),
                None => None,
            };
            Ok(json!({ "out": out, "frames": result.frames.len(), "video": muxed }))
        }
        Command::Eval {
            metric: Metric::Fvd { real, fake, embedder, clip_len },
        } => {
            let embedder = embedder.parse::<EmbedderSpec>()?.build()?;
            let report = compute_fvd(&read_videos(&real)?, &read_videos(&fake)?, embedder.as_ref(), clip_len)?;
            Ok(serde_json::to_value(report)?)
        }
    }
}

/// Runs one command line with an explicit data root. Returns the exit code:
/// 0 on success, 1 on a runtime failure (one JSON line on stderr), 2 on a
/// usage error.
pub fn run_command_in<I, T>(argv: I, root: PathBuf) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli, root) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            let line = json!({ "error": { "kind": e.kind(), "stage": e.stage_name(), "message": e.to_string() } });
            eprintln!("{line}");
            1
        }
    }
}

/// [`run_command_in`] with the data root taken from `MOTIONFLOW_DATA_ROOT`
/// (current directory when unset).
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let root = std::env::var_os(DATA_ROOT_ENV).map_or_else(|| PathBuf::from("."), PathBuf::from);
    run_command_in(argv, root)
}
