//! Stage 3: recurrent fusion of generated foregrounds into the background.

mod network;
mod seam;
mod train;

pub use network::{fuse_sequence, fuse_step, FusionNetConfig, FusionNetwork};
pub use seam::{boundary_band, seam_error};
pub use train::{train_fusion_stage, FusionClip, FusionStageConfig, FusionTrainReport};
