//! Dataset preparation, training-set assembly, end-to-end transfer and the
//! command-line front end.

mod cli;
mod config;
mod datasets;
mod fixture;
mod manifest;
mod prepare;
mod transfer;

pub use cli::{read_videos, run_command, run_command_in, DATA_ROOT_ENV};
pub use config::{PipelineConfig, WORKING_SIZE};
pub use datasets::{flow_samples, foreground_samples, fusion_clips, parsing_samples};
pub use fixture::{appearance_sidecars, synthetic_fixture, tiny_config, Fixture};
pub use manifest::{list_frames, DatasetManifest, Split, VideoEntry};
pub use prepare::{load_prepared, prepare, PrepareReport, PreparedVideo, VideoFailure};
pub use transfer::{
    mux_video, placement_record, transfer, write_frames, AppearanceInput, StageModels, TransferOutput, WrittenFrame,
    MODEL_STEMS,
};

use crate::error::Result;
use crate::pose::{smooth_sequence, PoseSequence, SmoothingConfig};

/// Savitzky–Golay smoothing with the window shrunk to the sequence length
/// when needed; sequences too short for any window stay raw.
pub fn smooth_poses(seq: &PoseSequence, cfg: &SmoothingConfig) -> Result<PoseSequence> {
    let len = seq.len();
    let mut window = cfg.window.min(if len % 2 == 1 { len } else { len.saturating_sub(1) });
    if window % 2 == 0 {
        window = window.saturating_sub(1);
    }
    if window <= cfg.polyorder {
        log::warn!("{len}-frame pose sequence is too short to smooth");
        return Ok(seq.clone());
    }
    smooth_sequence(seq, window, cfg.polyorder)
}
