//! Building blocks shared by the stage networks: a seeded parameter store,
//! common layers, tensor conversions, checkpoints and perceptual features.

mod checkpoint;
mod conv;
mod layers;
mod perceptual;
mod store;
mod tensor;

pub use checkpoint::{read_sidecar, save_checkpoint, Checkpoint};
pub use conv::{conv2d, Conv2d};
pub(crate) use checkpoint::load_into;
pub use layers::{conv, instance_norm, pad_to_multiple, upsample2, ConvBlock, ResBlock};
pub use perceptual::{
    perceptual_loss, perceptual_loss_tensor, IdentityExtractor, PerceptualExtractor, PerceptualSpec, RandomExtractor,
    Vgg19Extractor, VGG19_DEFAULT_TAPS,
};
pub use store::ParamStore;
pub use tensor::{
    frames_to_tensor, masks_to_tensor, one_hot_tensor, pose_maps_to_tensor, tensor_to_frames,
    tensor_to_masks,
};

use candle_core::Device;
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// All networks run on the CPU device.
pub fn device() -> Device {
    Device::Cpu
}

/// Plain Adam (AdamW with zero decay).
pub fn adam(store: &ParamStore, lr: f64, beta1: f64, beta2: f64) -> candle_core::Result<AdamW> {
    AdamW::new(
        store.vars(),
        ParamsAdamW {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            weight_decay: 0.0,
        },
    )
}

/// Deterministic per-epoch sample order.
pub(crate) fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    idx.shuffle(&mut rng);
    idx
}

/// Yields `(epoch, batch indices)` for a fixed number of optimizer steps,
/// reshuffling at every epoch boundary.
pub(crate) fn batch_schedule(n: usize, batch: usize, steps: usize, seed: u64) -> Vec<(usize, Vec<usize>)> {
    let batch = batch.clamp(1, n.max(1));
    let mut out = Vec::with_capacity(steps);
    let mut epoch = 0;
    let mut order = epoch_order(n, seed, epoch);
    let mut cursor = 0;
    while out.len() < steps {
        if cursor + batch > n {
            epoch += 1;
            order = epoch_order(n, seed, epoch);
            cursor = 0;
        }
        out.push((epoch, order[cursor..cursor + batch].to_vec()));
        cursor += batch;
    }
    out
}

/// One optimizer step; a zero learning rate leaves the weights untouched.
pub(crate) fn step(opt: &mut AdamW, loss: &candle_core::Tensor) -> candle_core::Result<()> {
    opt.backward_step(loss)
}

/// Per-step and per-epoch loss history of a training run.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossCurve {
    pub steps: Vec<f64>,
    pub epochs: Vec<f64>,
}

impl LossCurve {
    pub(crate) fn from_steps(steps: Vec<f64>, epoch_of_step: &[usize]) -> Self {
        let mut epochs: Vec<(f64, usize)> = Vec::new();
        for (&loss, &e) in steps.iter().zip(epoch_of_step) {
            if epochs.len() <= e {
                epochs.resize(e + 1, (0.0, 0));
            }
            epochs[e].0 += loss;
            epochs[e].1 += 1;
        }
        Self {
            steps,
            epochs: epochs
                .into_iter()
                .filter(|(_, n)| *n > 0)
                .map(|(s, n)| s / n as f64)
                .collect(),
        }
    }

    pub fn first(&self) -> Option<f64> {
        self.steps.first().copied()
    }

    pub fn last(&self) -> Option<f64> {
        self.steps.last().copied()
    }
}
