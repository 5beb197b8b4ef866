//! Stage 2: dual-path foreground generation guided by the target parsing and
//! by appearance flow, trained adversarially with L1 and perceptual terms.

mod discriminator;
mod generator;
mod train;

pub use discriminator::{adversarial_losses, adversarial_losses_tensor, AdversarialLosses, DiscConfig, PatchDiscriminator, ADV_EPS};
pub use generator::{generate_foreground, DualPathConfig, DualPathGenerator, WarpBlock, WarpConditioning};
pub use train::{train_foreground_stage, ForegroundModels, ForegroundSample, ForegroundStageConfig, ForegroundTrainReport};
