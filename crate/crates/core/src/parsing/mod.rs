//! Stage 1: pose-guided parsing generation.

mod generator;
mod loss;
mod train;

pub use generator::{generate_parsing, ParsingGenerator, ParsingNetConfig};
pub use loss::{parsing_losses, parsing_losses_tensor, ParsingLosses, PROB_EPS};
pub use train::{train_parsing_stage, ParsingSample, ParsingStageConfig, ParsingTrainReport};
