use candle_nn::ops::softmax;
use serde::{Deserialize, Serialize};

use super::{parsing_losses_tensor, ParsingGenerator, ParsingNetConfig};
use crate::error::{Error, Result};
use crate::flow::train::total_steps;
use crate::nn::{adam, batch_schedule, one_hot_tensor, step, LossCurve};
use crate::pose::PoseMap;
use crate::region::ParsingMap;

/// One (appearance parsing, target pose, target parsing) triple drawn from
/// a single video.
#[derive(Debug, Clone)]
pub struct ParsingSample {
    pub appearance: ParsingMap,
    pub pose: PoseMap,
    pub target: ParsingMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParsingStageConfig {
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub loss_weight_l1: f64,
    pub loss_weight_par: f64,
    pub epochs: usize,
    pub num_classes: usize,
    pub image_size: usize,
    pub batch_size: usize,
    /// Overrides `epochs` with a fixed number of optimizer steps.
    pub steps: Option<usize>,
    pub base_width: usize,
    pub res_blocks: usize,
}

impl Default for ParsingStageConfig {
    fn default() -> Self {
        let net = ParsingNetConfig::default();
        Self {
            lr: 2e-4,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            loss_weight_l1: 10.0,
            loss_weight_par: 10.0,
            epochs: 30,
            num_classes: net.num_classes,
            image_size: 448,
            batch_size: 1,
            steps: None,
            base_width: net.base_width,
            res_blocks: net.res_blocks,
        }
    }
}

impl ParsingStageConfig {
    pub fn net_config(&self) -> ParsingNetConfig {
        ParsingNetConfig {
            num_classes: self.num_classes,
            base_width: self.base_width,
            res_blocks: self.res_blocks,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || self.loss_weight_l1 < 0.0 || self.loss_weight_par < 0.0 {
            return Err(Error::invalid("parsing stage weights and learning rate must be non-negative"));
        }
        Ok(())
    }
}

/// Loss history: the weighted objective plus its per-pixel components.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParsingTrainReport {
    pub weighted: LossCurve,
    pub l1: Vec<f64>,
    pub par: Vec<f64>,
}

/// Trains the parsing generator on
/// `w_l1 · l1 / pixels + w_par · par / pixels`, where `pixels` counts
/// batch × height × width.
pub fn train_parsing_stage(
    samples: &[ParsingSample],
    cfg: &ParsingStageConfig,
    seed: u64,
) -> Result<(ParsingGenerator, ParsingTrainReport)> {
    if samples.is_empty() {
        return Err(Error::invalid("parsing training set is empty"));
    }
    cfg.validate()?;
    let gen = ParsingGenerator::new(cfg.net_config(), seed)?;
    let mut opt = adam(gen.store(), cfg.lr, cfg.adam_beta1, cfg.adam_beta2)?;
    let steps = total_steps(samples.len(), cfg.batch_size, cfg.epochs, cfg.steps);
    let mut report = ParsingTrainReport::default();
    let (mut totals, mut epochs) = (Vec::new(), Vec::new());
    for (epoch, batch) in batch_schedule(samples.len(), cfg.batch_size, steps, seed) {
        let items: Vec<&ParsingSample> = batch.iter().map(|&i| &samples[i]).collect();
        let x = gen.input_tensor(
            &items.iter().map(|s| &s.appearance).collect::<Vec<_>>(),
            &items.iter().map(|s| &s.pose).collect::<Vec<_>>(),
        )?;
        let target = one_hot_tensor(&items.iter().map(|s| &s.target).collect::<Vec<_>>())?;
        let probs = softmax(&gen.forward(&x)?, 1)?;
        let (b, _, h, w) = probs.dims4()?;
        let pixels = (b * h * w) as f64;
        let (l1, par) = parsing_losses_tensor(&probs, &target)?;
        let (l1, par) = ((l1 / pixels)?, (par / pixels)?);
        let loss = ((&l1 * cfg.loss_weight_l1)? + (&par * cfg.loss_weight_par)?)?;
        step(&mut opt, &loss)?;
        totals.push(loss.to_scalar::<f32>()? as f64);
        report.l1.push(l1.to_scalar::<f32>()? as f64);
        report.par.push(par.to_scalar::<f32>()? as f64);
        epochs.push(epoch);
    }
    report.weighted = LossCurve::from_steps(totals, &epochs);
    Ok((gen, report))
}
