use serde::{Deserialize, Serialize};

use super::{FusionNetConfig, FusionNetwork};
use crate::error::{Error, Result};
use crate::flow::train::total_steps;
use crate::nn::{adam, batch_schedule, frames_to_tensor, masks_to_tensor, perceptual_loss_tensor, step, LossCurve, PerceptualSpec};
use crate::region::{Frame, Mask};

/// `K` consecutive foreground/ground-truth pairs over one background. The
/// bootstrap mask overlays the first foreground.
#[derive(Debug, Clone)]
pub struct FusionClip {
    pub background: Frame,
    pub foregrounds: Vec<Frame>,
    pub targets: Vec<Frame>,
    pub bootstrap_mask: Mask,
}

impl FusionClip {
    fn check(&self) -> Result<()> {
        let bg = &self.background;
        let ok = self.foregrounds.len() == self.targets.len()
            && self.foregrounds.iter().chain(&self.targets).all(|f| f.same_shape(bg))
            && (self.bootstrap_mask.height, self.bootstrap_mask.width) == (bg.height, bg.width);
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("fusion clip frames differ in size or count"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionStageConfig {
    pub network: FusionNetConfig,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub batch_size: usize,
    pub clip_len: usize,
    pub epochs: usize,
    pub steps: Option<usize>,
    pub weight_l1: f64,
    pub weight_per: f64,
    pub perceptual: PerceptualSpec,
    pub layer_weights: Option<Vec<f64>>,
}

impl Default for FusionStageConfig {
    fn default() -> Self {
        Self {
            network: FusionNetConfig::default(),
            lr: 1e-4,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            batch_size: 1,
            clip_len: 5,
            epochs: 5,
            steps: None,
            weight_l1: 1.0,
            weight_per: 1.0,
            perceptual: PerceptualSpec::default(),
            layer_weights: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FusionTrainReport {
    pub total: LossCurve,
    /// Mean per-frame L1 over the fused frames of each step.
    pub l1: Vec<f64>,
    pub perceptual: Vec<f64>,
}

/// Trains on whole clips, one clip per step. Frame 0 of every clip is the
/// bootstrap overlay; each later frame feeds its differentiable output to the
/// next step, and the loss sums over frames `1..K`.
pub fn train_fusion_stage(clips: &[FusionClip], cfg: &FusionStageConfig, seed: u64) -> Result<(FusionNetwork, FusionTrainReport)> {
    let mut usable = Vec::new();
    for (i, c) in clips.iter().enumerate() {
        c.check()?;
        if c.foregrounds.len() < 2 {
            log::warn!("skipping fusion clip {i}: fewer than two frames");
        } else {
            usable.push(c);
        }
    }
    if usable.is_empty() {
        return Err(Error::invalid("no fusion clip has at least two frames"));
    }
    if cfg.weight_l1 < 0.0 || cfg.weight_per < 0.0 {
        return Err(Error::invalid("loss weights must be non-negative"));
    }
    let net = FusionNetwork::new(cfg.network.clone(), seed)?;
    let ext = cfg.perceptual.build()?;
    let weights = cfg.layer_weights.clone().unwrap_or_else(|| ext.default_weights());
    let mut opt = adam(net.store(), cfg.lr, cfg.adam_beta1, cfg.adam_beta2)?;
    let steps = total_steps(usable.len(), 1, cfg.epochs, cfg.steps);
    let mut report = FusionTrainReport::default();
    let (mut totals, mut epochs) = (Vec::new(), Vec::new());
    for (epoch, batch) in batch_schedule(usable.len(), 1, steps, seed) {
        let clip = usable[batch[0]];
        let k = clip.foregrounds.len().min(cfg.clip_len.max(2));
        let bg = frames_to_tensor(&[&clip.background])?;
        let boot = masks_to_tensor(&[&clip.bootstrap_mask])?;
        let mut prev = FusionNetwork::blend(&frames_to_tensor(&[&clip.foregrounds[0]])?, &bg, &boot)?;
        let (mut l1_sum, mut per_sum) = (None::<candle_core::Tensor>, None::<candle_core::Tensor>);
        for t in 1..k {
            let fg = frames_to_tensor(&[&clip.foregrounds[t]])?;
            let gt = frames_to_tensor(&[&clip.targets[t]])?;
            let m = net.mask(&bg, &fg, &prev)?;
            let out = FusionNetwork::blend(&fg, &bg, &m)?;
            let l1 = (&out - &gt)?.abs()?.mean_all()?;
            let per = perceptual_loss_tensor(ext.as_ref(), &out, &gt, &weights)?;
            l1_sum = Some(match l1_sum {
                Some(s) => (s + l1)?,
                None => l1,
            });
            per_sum = Some(match per_sum {
                Some(s) => (s + per)?,
                None => per,
            });
            prev = out;
        }
        let (l1, per) = (l1_sum.unwrap(), per_sum.unwrap());
        let total = ((&l1 * cfg.weight_l1)? + (&per * cfg.weight_per)?)?;
        step(&mut opt, &total)?;
        let frames = (k - 1) as f64;
        totals.push(total.to_scalar::<f32>()? as f64);
        report.l1.push(l1.to_scalar::<f32>()? as f64 / frames);
        report.perceptual.push(per.to_scalar::<f32>()? as f64 / frames);
        epochs.push(epoch);
        log::debug!("fusion step {}: loss {:.5}", totals.len(), totals.last().unwrap());
    }
    report.total = LossCurve::from_steps(totals, &epochs);
    Ok((net, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> FusionStageConfig {
        FusionStageConfig {
            network: FusionNetConfig {
                base_width: 4,
                res_blocks: 1,
                downscale: 1,
            },
            steps: Some(3),
            perceptual: PerceptualSpec::Random {
                seed: 1,
                widths: vec![4],
            },
            ..Default::default()
        }
    }

    fn clip(k: usize) -> FusionClip {
        let (h, w) = (8, 8);
        let bg = Frame::filled(h, w, [0.1, 0.2, 0.3]);
        let fgs: Vec<Frame> = (0..k).map(|t| Frame::from_fn(h, w, |y, x| [((x + t) % 4) as f32 / 4.0, y as f32 / 8.0, 0.5])).collect();
        let mask = Mask::new(h, w, (0..h * w).map(|i| ((i % w) >= 4) as u8 as f32).collect()).unwrap();
        let targets = fgs.iter().map(|f| crate::region::composite(f, &bg, &mask).unwrap()).collect();
        FusionClip {
            background: bg,
            foregrounds: fgs,
            targets,
            bootstrap_mask: mask,
        }
    }

    #[test]
    fn stage_defaults() {
        let c = FusionStageConfig::default();
        assert_eq!((c.weight_l1, c.weight_per), (1.0, 1.0));
        assert_eq!((c.lr, c.batch_size, c.clip_len, c.epochs), (1e-4, 1, 5, 5));
        assert_eq!(c.network.downscale, 1);
    }

    #[test]
    fn deterministic_and_short_clips_skipped() {
        let clips = [clip(5), clip(1)];
        let (_, a) = train_fusion_stage(&clips, &tiny(), 4).unwrap();
        let (_, b) = train_fusion_stage(&clips, &tiny(), 4).unwrap();
        assert_eq!(a.total.steps, b.total.steps);
        assert_eq!(a.total.steps.len(), 3);
        assert!(train_fusion_stage(&[clip(1)], &tiny(), 4).is_err());
    }

    #[test]
    fn zero_lr_keeps_weights() {
        let cfg = FusionStageConfig { lr: 0.0, ..tiny() };
        let (net, _) = train_fusion_stage(&[clip(3)], &cfg, 2).unwrap();
        let fresh = FusionNetwork::new(cfg.network.clone(), 2).unwrap();
        for name in net.store().names() {
            let a: Vec<f32> = net.store().get(&name).unwrap().flatten_all().unwrap().to_vec1().unwrap();
            let b: Vec<f32> = fresh.store().get(&name).unwrap().flatten_all().unwrap().to_vec1().unwrap();
            assert_eq!(a, b, "{name}");
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("fusion");
        let cfg = tiny();
        let (net, _) = train_fusion_stage(&[clip(3)], &cfg, 2).unwrap();
        net.save(&stem, &cfg).unwrap();
        let back = FusionNetwork::load(&stem).unwrap();
        let c = clip(2);
        let a = super::super::fuse_step(&net, &c.background, &c.foregrounds[1], &c.foregrounds[0]).unwrap();
        let b = super::super::fuse_step(&back, &c.background, &c.foregrounds[1], &c.foregrounds[0]).unwrap();
        assert_eq!(a, b);
        let side: FusionStageConfig = crate::nn::read_sidecar(&stem, super::super::network::CHECKPOINT_KIND).unwrap();
        assert_eq!(side, cfg);
    }
}
