use serde::{Deserialize, Serialize};

use super::loss::flow_targets;
use super::{body_faces, flow_losses_tensor, oracle_flow, BodyModel, CorrespondenceScene, FlowField, FlowNetConfig, FlowRegressor, VisibilityMap};
use crate::error::{Error, Result, StageContext};
use crate::nn::{adam, batch_schedule, step, LossCurve};
use crate::pose::{rasterize_pose, PoseFrame, PoseMap, RasterOptions};

/// One regressor training example.
#[derive(Debug, Clone)]
pub struct FlowSample {
    pub appearance: PoseMap,
    pub target: PoseMap,
    pub flow: FlowField,
    pub visibility: VisibilityMap,
}

/// Builds a training example from a pose pair: both poses drive the
/// synthetic body, the oracle supplies flow and visibility, and the pose
/// maps are rasterized from the same poses that generated the geometry.
pub fn flow_sample_from_poses(
    appearance: &PoseFrame,
    target: &PoseFrame,
    height: usize,
    width: usize,
    raster: &RasterOptions,
) -> Result<FlowSample> {
    let model = BodyModel::for_pose(appearance);
    let scene = CorrespondenceScene {
        height,
        width,
        source: body_faces(appearance, &model),
        target: body_faces(target, &model),
    };
    let oracle = oracle_flow(&scene)?;
    Ok(FlowSample {
        appearance: rasterize_pose(appearance, height, width, raster)?,
        target: rasterize_pose(target, height, width, raster)?,
        flow: oracle.flow,
        visibility: oracle.visibility,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowStageConfig {
    pub net: FlowNetConfig,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Overrides `epochs` with a fixed number of optimizer steps.
    pub steps: Option<usize>,
    pub epe_weight: f64,
    pub ce_weight: f64,
}

impl Default for FlowStageConfig {
    fn default() -> Self {
        Self {
            net: FlowNetConfig::default(),
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            batch_size: 8,
            epochs: 40,
            steps: None,
            epe_weight: 1.0,
            ce_weight: 1.0,
        }
    }
}

/// Loss history of a regressor run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FlowTrainReport {
    pub total: LossCurve,
    pub epe: Vec<f64>,
    pub ce: Vec<f64>,
}

pub(crate) fn total_steps(n: usize, batch: usize, epochs: usize, steps: Option<usize>) -> usize {
    steps.unwrap_or_else(|| epochs * n.div_ceil(batch.clamp(1, n.max(1))))
}

/// Trains the flow regressor on `epe_weight·EPE + ce_weight·CE`.
pub fn train_flow_stage(samples: &[FlowSample], cfg: &FlowStageConfig, seed: u64) -> Result<(FlowRegressor, FlowTrainReport)> {
    if samples.is_empty() {
        return Err(Error::invalid("flow training set is empty"));
    }
    let net = FlowRegressor::new(cfg.net.clone(), seed)?;
    let mut opt = adam(net.store(), cfg.lr, cfg.beta1, cfg.beta2)?;
    let steps = total_steps(samples.len(), cfg.batch_size, cfg.epochs, cfg.steps);
    let schedule = batch_schedule(samples.len(), cfg.batch_size, steps, seed);
    let mut report = FlowTrainReport::default();
    let mut totals = Vec::with_capacity(steps);
    let mut epochs = Vec::with_capacity(steps);
    for (epoch, batch) in schedule {
        let items: Vec<&FlowSample> = batch.iter().map(|&i| &samples[i]).collect();
        let input = FlowRegressor::input_tensor(
            &items.iter().map(|s| &s.appearance).collect::<Vec<_>>(),
            &items.iter().map(|s| &s.target).collect::<Vec<_>>(),
        )
        .stage("flow")?;
        let (gt_flow, gt_vis) = flow_targets(
            &items.iter().map(|s| &s.flow).collect::<Vec<_>>(),
            &items.iter().map(|s| &s.visibility).collect::<Vec<_>>(),
        )?;
        let (flow, logits) = net.forward(&input)?;
        let (epe, ce) = flow_losses_tensor(&flow, &logits, &gt_flow, &gt_vis)?;
        let loss = ((&epe * cfg.epe_weight)? + (&ce * cfg.ce_weight)?)?;
        step(&mut opt, &loss)?;
        totals.push(loss.to_scalar::<f32>()? as f64);
        report.epe.push(epe.to_scalar::<f32>()? as f64);
        report.ce.push(ce.to_scalar::<f32>()? as f64);
        epochs.push(epoch);
        log::debug!("flow step {}: loss {:.5}", totals.len(), totals.last().unwrap());
    }
    report.total = LossCurve::from_steps(totals, &epochs);
    Ok((net, report))
}
