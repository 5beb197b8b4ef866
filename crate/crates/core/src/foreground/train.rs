use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{adversarial_losses_tensor, DiscConfig, DualPathConfig, DualPathGenerator, PatchDiscriminator, WarpConditioning};
use crate::error::{Error, Result};
use crate::flow::train::total_steps;
use crate::flow::{FlowField, VisibilityMap};
use crate::nn::{adam, batch_schedule, frames_to_tensor, perceptual_loss_tensor, step, LossCurve, PerceptualSpec};
use crate::region::{Frame, ParsingMap};

pub(crate) const CHECKPOINT_KIND: &str = "foreground";

/// One training example at working resolution.
#[derive(Debug, Clone)]
pub struct ForegroundSample {
    pub appearance: Frame,
    pub parsing: ParsingMap,
    pub flow: FlowField,
    pub visibility: VisibilityMap,
    pub target: Frame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForegroundStageConfig {
    pub generator: DualPathConfig,
    pub discriminator: DiscConfig,
    pub gen_lr: f64,
    pub disc_lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Overrides `epochs` with a fixed number of optimizer steps.
    pub steps: Option<usize>,
    pub lambda_adv: f64,
    pub lambda_l1: f64,
    pub lambda_per: f64,
    /// Feed appearance features to the decoder without warping.
    pub no_flow: bool,
    pub perceptual: PerceptualSpec,
    /// Per-layer perceptual weights; `None` means equal weights.
    pub layer_weights: Option<Vec<f64>>,
}

impl Default for ForegroundStageConfig {
    fn default() -> Self {
        Self {
            generator: DualPathConfig::default(),
            discriminator: DiscConfig::default(),
            gen_lr: 2e-4,
            disc_lr: 2e-5,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            batch_size: 8,
            epochs: 40,
            steps: None,
            lambda_adv: 0.01,
            lambda_l1: 1.0,
            lambda_per: 1.0,
            no_flow: false,
            perceptual: PerceptualSpec::default(),
            layer_weights: None,
        }
    }
}

/// Per-step loss history.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ForegroundTrainReport {
    pub generator: LossCurve,
    pub g_adv: Vec<f64>,
    pub l1: Vec<f64>,
    pub perceptual: Vec<f64>,
    pub d_loss: Vec<f64>,
}

/// Trained generator/discriminator pair together with its configuration.
#[derive(Debug, Clone)]
pub struct ForegroundModels {
    pub config: ForegroundStageConfig,
    pub generator: DualPathGenerator,
    pub discriminator: PatchDiscriminator,
}

impl ForegroundModels {
    pub fn new(config: ForegroundStageConfig, seed: u64) -> Result<Self> {
        let generator = DualPathGenerator::new(config.generator.clone(), seed)?;
        let discriminator = PatchDiscriminator::new(
            config.discriminator.clone(),
            config.generator.num_classes,
            seed.wrapping_add(1),
        )?;
        Ok(Self {
            config,
            generator,
            discriminator,
        })
    }

    pub(crate) fn conditioning(&self, flows: &[&FlowField], vis: &[&VisibilityMap], h: usize, w: usize) -> Result<WarpConditioning> {
        let levels = self.config.generator.levels;
        if self.config.no_flow {
            WarpConditioning::identity(flows.len(), h, w, levels)
        } else {
            WarpConditioning::new(flows, vis, h, w, levels)
        }
    }

    /// Foreground for one input; honours the `no_flow` ablation.
    pub fn generate(&self, appearance: &Frame, parsing: &ParsingMap, flow: &FlowField, vis: &VisibilityMap) -> Result<Frame> {
        let (h, w) = (appearance.height, appearance.width);
        self.generator.check_size(h, w)?;
        let (a, p) = self.generator.inputs(&[appearance], &[parsing])?;
        let cond = self.conditioning(&[flow], &[vis], h, w)?;
        let y = self.generator.forward(&a, &p, &cond)?;
        Ok(crate::nn::tensor_to_frames(&y)?.remove(0))
    }

    pub fn save(&self, stem: &Path) -> Result<()> {
        crate::nn::save_checkpoint(
            stem,
            CHECKPOINT_KIND,
            &self.config,
            &[("gen", self.generator.store()), ("disc", self.discriminator.store())],
        )?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let config: ForegroundStageConfig = crate::nn::read_sidecar(stem, CHECKPOINT_KIND)?;
        let me = Self::new(config, 0)?;
        crate::nn::load_into(stem, "gen", me.generator.store())?;
        crate::nn::load_into(stem, "disc", me.discriminator.store())?;
        Ok(me)
    }
}

/// Alternating discriminator/generator updates. The generator minimises
/// `λ_adv · g_adv + λ_L1 · L1 + λ_per · perceptual`.
pub fn train_foreground_stage(
    samples: &[ForegroundSample],
    cfg: &ForegroundStageConfig,
    seed: u64,
) -> Result<(ForegroundModels, ForegroundTrainReport)> {
    if samples.is_empty() {
        return Err(Error::invalid("foreground training set is empty"));
    }
    if [cfg.lambda_adv, cfg.lambda_l1, cfg.lambda_per].iter().any(|&l| !(l >= 0.0)) {
        return Err(Error::invalid("loss weights must be non-negative"));
    }
    let models = ForegroundModels::new(cfg.clone(), seed)?;
    let ext = cfg.perceptual.build()?;
    let weights = cfg.layer_weights.clone().unwrap_or_else(|| ext.default_weights());
    let mut g_opt = adam(models.generator.store(), cfg.gen_lr, cfg.adam_beta1, cfg.adam_beta2)?;
    let mut d_opt = adam(models.discriminator.store(), cfg.disc_lr, cfg.adam_beta1, cfg.adam_beta2)?;
    let steps = total_steps(samples.len(), cfg.batch_size, cfg.epochs, cfg.steps);
    let mut report = ForegroundTrainReport::default();
    let (mut totals, mut epochs) = (Vec::new(), Vec::new());
    for (epoch, batch) in batch_schedule(samples.len(), cfg.batch_size, steps, seed) {
        let items: Vec<&ForegroundSample> = batch.iter().map(|&i| &samples[i]).collect();
        let (h, w) = (items[0].appearance.height, items[0].appearance.width);
        models.generator.check_size(h, w)?;
        let (a, p) = models.generator.inputs(
            &items.iter().map(|s| &s.appearance).collect::<Vec<_>>(),
            &items.iter().map(|s| &s.parsing).collect::<Vec<_>>(),
        )?;
        let target = frames_to_tensor(&items.iter().map(|s| &s.target).collect::<Vec<_>>())?;
        let cond = models.conditioning(
            &items.iter().map(|s| &s.flow).collect::<Vec<_>>(),
            &items.iter().map(|s| &s.visibility).collect::<Vec<_>>(),
            h,
            w,
        )?;
        let fake = models.generator.forward(&a, &p, &cond)?;

        let d_real = models.discriminator.scores(&a, &p, &target)?;
        let d_fake = models.discriminator.scores(&a, &p, &fake.detach())?;
        let (d_loss, _) = adversarial_losses_tensor(&d_real, &d_fake)?;
        step(&mut d_opt, &d_loss)?;

        let (_, g_adv) = adversarial_losses_tensor(&d_real.detach(), &models.discriminator.scores(&a, &p, &fake)?)?;
        let l1 = (&fake - &target)?.abs()?.mean_all()?;
        let per = perceptual_loss_tensor(ext.as_ref(), &fake, &target, &weights)?;
        let total = (((&g_adv * cfg.lambda_adv)? + (&l1 * cfg.lambda_l1)?)? + (&per * cfg.lambda_per)?)?;
        step(&mut g_opt, &total)?;

        totals.push(total.to_scalar::<f32>()? as f64);
        report.g_adv.push(g_adv.to_scalar::<f32>()? as f64);
        report.l1.push(l1.to_scalar::<f32>()? as f64);
        report.perceptual.push(per.to_scalar::<f32>()? as f64);
        report.d_loss.push(d_loss.to_scalar::<f32>()? as f64);
        epochs.push(epoch);
    }
    report.generator = LossCurve::from_steps(totals, &epochs);
    Ok((models, report))
}
