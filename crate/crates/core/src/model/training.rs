//! Three-stage training: MSS-net alone, MSR-net on frozen MSS features, then
//! the joint network with keypoint masking.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use poseforge_nn::{par, Adam, Grads, Graph, ParamStore, Sgd, Tensor};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::checkpoint::{save_checkpoint, CheckpointMeta, PlateauState};
use super::{ForwardMode, NetworkOutput, PoseNet, STEM_STRIDE};
use crate::augmentation::{augment, AugmentConfig, AugmentedSample};
use crate::data::Sample;
use crate::evaluation::{evaluate, predict_keypoints, EvalConfig};
use crate::heatmaps::{build_gt_pyramid, to_heatmap_coords, HeatmapPyramid};
use crate::losses::{training_loss, LossConfig, OutputSlot, TrainingLoss};
use crate::rng::{mix, stream_rng};
use crate::skeleton::{KeypointSet, SkeletalGraph, NUM_KEYPOINTS};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    /// Epochs of stages 1, 2 and 3.
    pub stage_epochs: [usize; 3],
    /// Initial learning rate of every stage.
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// SGD momentum (ignored by Adam).
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Divide the learning rate by this factor on a plateau.
    pub plateau_factor: f64,
    /// Validation checks without improvement before decaying.
    pub plateau_patience: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            stage_epochs: [150, 75, 75],
            learning_rate: 5e-4,
            optimizer: OptimizerKind::Sgd,
            momentum: 0.0,
            weight_decay: 0.0,
            batch_size: 8,
            plateau_factor: 5.0,
            plateau_patience: 8,
        }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if self.stage_epochs.contains(&0) {
            return Err(Error::InvalidConfig("every stage needs at least one epoch".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) || self.weight_decay < 0.0 {
            return Err(Error::InvalidConfig("momentum must lie in [0, 1) and weight_decay >= 0".into()));
        }
        if self.batch_size == 0 || self.plateau_patience == 0 || !(self.plateau_factor > 1.0) {
            return Err(Error::InvalidConfig(
                "batch_size and plateau_patience must be >= 1, plateau_factor > 1".into(),
            ));
        }
        Ok(())
    }
}

/// A pipeline component that can be switched off for comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ablation {
    /// Supervise only the finest scale of each stack.
    NoMultiscaleSupervision,
    /// Skip the MSR-net; predict from the last stack's finest scale.
    NoMsr,
    /// Drop the structural term (`alpha = 0`).
    NoStructureLoss,
    /// Fine-tune without keypoint masking.
    NoMasking,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::NoMultiscaleSupervision,
        Ablation::NoMsr,
        Ablation::NoStructureLoss,
        Ablation::NoMasking,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::NoMultiscaleSupervision => "no-multiscale-supervision",
            Ablation::NoMsr => "no-msr",
            Ablation::NoStructureLoss => "no-structure-loss",
            Ablation::NoMasking => "no-masking",
        }
    }
}

impl std::str::FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| {
            let names: Vec<_> = Ablation::ALL.iter().map(|a| a.name()).collect();
            Error::InvalidInput(format!("unknown ablation `{s}` (expected one of {})", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablations {
    pub no_multiscale_supervision: bool,
    pub no_msr: bool,
    pub no_structure_loss: bool,
    pub no_masking: bool,
}

impl Ablations {
    pub fn with(mut self, a: Ablation) -> Self {
        *self.flag(a) = true;
        self
    }

    fn flag(&mut self, a: Ablation) -> &mut bool {
        match a {
            Ablation::NoMultiscaleSupervision => &mut self.no_multiscale_supervision,
            Ablation::NoMsr => &mut self.no_msr,
            Ablation::NoStructureLoss => &mut self.no_structure_loss,
            Ablation::NoMasking => &mut self.no_masking,
        }
    }

    pub fn contains(mut self, a: Ablation) -> bool {
        *self.flag(a)
    }

    pub fn active(self) -> Vec<Ablation> {
        Ablation::ALL.into_iter().filter(|a| self.contains(*a)).collect()
    }

    /// Comma-separated names, or `None` when nothing is ablated.
    pub fn tag(self) -> Option<String> {
        let names: Vec<_> = self.active().iter().map(|a| a.name()).collect();
        (!names.is_empty()).then(|| names.join(","))
    }

    /// Loss configuration with the loss-side ablations applied.
    pub fn apply_to_loss(self, cfg: &LossConfig, depth: usize) -> LossConfig {
        let mut cfg = cfg.clone();
        if self.no_structure_loss {
            cfg.alpha = 0.0;
        }
        if self.no_multiscale_supervision {
            cfg.scale_weights = (0..depth).map(|i| if i == 0 { cfg.scale_weight(0) } else { 0.0 }).collect();
        }
        cfg
    }
}

/// Everything that shapes a training run apart from the network itself.
#[derive(Debug, Clone)]
pub struct TrainSettings {
    pub loss: LossConfig,
    pub augment: AugmentConfig,
    pub schedule: Schedule,
    pub graph: SkeletalGraph,
    pub sigma: f64,
    pub seed: u64,
    pub ablations: Ablations,
    /// Recorded in checkpoints to detect configuration drift.
    pub config_hash: String,
}

/// Which stages to run and where to write artifacts.
#[derive(Debug, Clone, Default)]
pub struct RunControl {
    /// Stages to execute, a subset of `1..=3`; empty means all.
    pub stages: Vec<usize>,
    /// Continue from this checkpoint state.
    pub resume: Option<CheckpointMeta>,
    /// Run directory for checkpoints, the CSV log and failure dumps.
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: usize,
    pub epoch: usize,
    pub learning_rate: f64,
    pub loss_total: f64,
    pub loss_ms: f64,
    pub loss_structural: f64,
    /// Validation PCKh@0.5, when a validation split exists.
    pub val_pckh: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: usize,
    pub epochs: usize,
    pub final_learning_rate: f64,
    pub best_val_pckh: Option<f64>,
    pub final_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epochs: Vec<EpochRecord>,
    pub stages: Vec<StageRecord>,
}

pub const LOG_FILE: &str = "train_log.csv";
pub const DUMP_FILE: &str = "nonfinite_dump.json";

/// Forward mode of `stage`, or `None` when the stage is skipped.
pub fn stage_mode(stage: usize, ablations: Ablations) -> Option<ForwardMode> {
    match (stage, ablations.no_msr) {
        (1, _) => Some(ForwardMode::Mss),
        (2, true) => None,
        (2, false) => Some(ForwardMode::MsrOnly),
        (3, true) => Some(ForwardMode::Mss),
        (3, false) => Some(ForwardMode::Full),
        _ => None,
    }
}

/// Whether predictions after `stage` come from the MSR-net.
pub fn uses_msr(stage: usize, ablations: Ablations) -> bool {
    stage >= 2 && !ablations.no_msr
}

enum Optimizer {
    Sgd(Sgd),
    Adam(Adam),
}

impl Optimizer {
    fn new(s: &Schedule) -> Self {
        match s.optimizer {
            OptimizerKind::Sgd => Optimizer::Sgd(Sgd::new(s.momentum as f32, s.weight_decay as f32)),
            OptimizerKind::Adam => Optimizer::Adam(Adam::default()),
        }
    }

    fn step(&mut self, p: &mut ParamStore, g: &Grads, lr: f64) {
        match self {
            Optimizer::Sgd(o) => o.step(p, g, lr as f32),
            Optimizer::Adam(o) => o.step(p, g, lr as f32),
        }
    }
}

/// A training example after augmentation.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub chw: Vec<f32>,
    pub gt: HeatmapPyramid,
}

/// Augments `sample` and renders its ground-truth pyramid.
pub fn prepare_sample(
    sample: &Sample,
    net: &PoseNet,
    settings: &TrainSettings,
    masking: bool,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<Prepared> {
    let aug = augment(
        AugmentedSample::new(sample.image.clone(), sample.record.keypoints),
        &settings.augment,
        masking,
        rng,
    );
    let cfg = net.config();
    let hm = to_heatmap_coords(&aug.keypoints, STEM_STRIDE);
    let gt = build_gt_pyramid(&hm, cfg.heatmap_resolution(), cfg.hourglass_depth, settings.sigma)?;
    Ok(Prepared {
        chw: aug.image.to_chw(),
        gt,
    })
}

fn slot_index(slot: OutputSlot, depth: usize, stacks: usize) -> usize {
    match slot {
        OutputSlot::Stack { stack, scale } => stack * depth + scale,
        OutputSlot::Final => stacks * depth,
    }
}

/// Loss-relevant view of a forward pass in `mode`.
fn loss_view(out: &NetworkOutput, mode: ForwardMode) -> NetworkOutput {
    match mode {
        ForwardMode::MsrOnly => NetworkOutput {
            per_stack: Vec::new(),
            final_heatmaps: out.final_heatmaps.clone(),
        },
        _ => out.clone(),
    }
}

/// Mean loss terms of one optimisation step.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepLoss {
    pub total: f64,
    pub ms: f64,
    pub structural: f64,
}

/// Loss and parameter gradients of one batch, averaged over the batch.
pub fn batch_gradients(
    net: &PoseNet,
    batch: &[Prepared],
    mode: ForwardMode,
    loss: &LossConfig,
    graph: &SkeletalGraph,
) -> Result<(StepLoss, Grads)> {
    let cfg = net.config();
    let (h, w) = cfg.input_resolution;
    let n = batch.len();
    let data: Vec<f32> = batch.iter().flat_map(|p| p.chw.iter().copied()).collect();
    let images = Tensor::from_vec([n, 3, h, w], data)?;
    let mut g = Graph::new(net.params());
    let out = net.forward_graph(&mut g, &images, mode)?;
    let outputs = net.collect_outputs(&g, &out)?;
    let losses: Vec<Result<TrainingLoss>> =
        par::map_indexed(n, |b| training_loss(&loss_view(&outputs[b], mode), &batch[b].gt, graph, loss));
    let (depth, stacks) = (cfg.hourglass_depth, cfg.num_stacks);
    let mut seeds: Vec<Option<(poseforge_nn::Var, Tensor)>> = vec![None; stacks * depth + 1];
    let mut step = StepLoss::default();
    let scale = 1.0 / n as f64;
    for (b, l) in losses.into_iter().enumerate() {
        let l = l?;
        step.total += l.total() * scale;
        step.ms += l.ms() * scale;
        step.structural += l.structural() * scale;
        for term in &l.terms {
            let var = match term.slot {
                OutputSlot::Stack { stack, scale } => out.taps[stack][scale],
                OutputSlot::Final => out.final_heatmaps.expect("final output was supervised"),
            };
            let entry = seeds[slot_index(term.slot, depth, stacks)]
                .get_or_insert_with(|| (var, Tensor::zeros(g.value(var).shape())));
            for (s, v) in entry.1.item_mut(b).iter_mut().zip(&term.grad) {
                *s += (v * scale) as f32;
            }
        }
    }
    let seeds: Vec<(poseforge_nn::Var, Tensor)> = seeds.into_iter().flatten().collect();
    let grads = g.backward(&seeds)?;
    Ok((step, grads))
}

/// Predictions in crop coordinates for every sample.
pub fn predict(net: &PoseNet, samples: &[Sample], use_msr: bool) -> Result<Vec<(KeypointSet, [f64; NUM_KEYPOINTS])>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(16) {
        let images: Vec<&crate::raster::Image> = chunk.iter().map(|s| &s.image).collect();
        let t = super::images_to_tensor(&images)?;
        for o in net.forward(&t, use_msr)? {
            out.push(predict_keypoints(o.prediction(), STEM_STRIDE));
        }
    }
    Ok(out)
}

/// PCKh@0.5 of plain single-pass inference.
pub fn pckh(net: &PoseNet, samples: &[Sample], use_msr: bool) -> Result<f64> {
    let preds: Vec<KeypointSet> = predict(net, samples, use_msr)?.into_iter().map(|p| p.0).collect();
    let gts: Vec<KeypointSet> = samples.iter().map(|s| s.record.keypoints).collect();
    Ok(evaluate(&preds, &gts, &EvalConfig::default())?.aggregate_pck)
}

fn append_log(dir: &Path, rec: &EpochRecord) -> Result<()> {
    let path = dir.join(LOG_FILE);
    let fresh = !path.exists();
    let file = fs::OpenOptions::new().create(true).append(true).open(&path)?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    w.serialize(rec).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct FailureDump<'a> {
    stage: usize,
    epoch: usize,
    batch: usize,
    sample_indices: &'a [usize],
    learning_rate: f64,
    loss_total: f64,
    loss_ms: f64,
    loss_structural: f64,
    gradients_finite: bool,
    parameters_finite: bool,
    gradient_norm: f64,
}

/// Runs the configured stages in order and returns the per-epoch log.
pub fn staged_training(
    net: &mut PoseNet,
    train: &[Sample],
    val: &[Sample],
    settings: &TrainSettings,
    control: &RunControl,
) -> Result<TrainingReport> {
    if train.is_empty() {
        return Err(Error::InvalidInput("training split is empty".into()));
    }
    settings.schedule.validate()?;
    settings.augment.validate()?;
    settings.loss.validate()?;
    let (h, w) = net.config().input_resolution;
    if let Some(s) = train.iter().chain(val).find(|s| (s.image.height(), s.image.width()) != (h, w)) {
        return Err(Error::InvalidInput(format!(
            "{} is {}x{}, the model expects {h}x{w}",
            s.record.image,
            s.image.height(),
            s.image.width()
        )));
    }
    let stages: Vec<usize> = if control.stages.is_empty() { vec![1, 2, 3] } else { control.stages.clone() };
    if let Some(bad) = stages.iter().find(|s| !(1..=3).contains(*s)) {
        return Err(Error::InvalidConfig(format!("stage {bad} does not exist (expected 1, 2 or 3)")));
    }
    let loss_cfg = settings.ablations.apply_to_loss(&settings.loss, net.config().hourglass_depth);
    let sched = &settings.schedule;
    let mut report = TrainingReport::default();
    if let Some(r) = &control.resume {
        report.epochs = r.history.clone();
    }

    for &stage in &stages {
        let Some(mode) = stage_mode(stage, settings.ablations) else {
            log::info!("stage {stage} skipped by ablation");
            continue;
        };
        let epochs = sched.stage_epochs[stage - 1];
        let (mut start, mut plateau) = (
            0,
            PlateauState {
                learning_rate: sched.learning_rate,
                best: None,
                bad_epochs: 0,
            },
        );
        if let Some(r) = &control.resume {
            if stage < r.stage || (stage == r.stage && r.stage_complete) {
                continue;
            }
            if stage == r.stage {
                start = r.epoch;
                plateau = r.plateau;
            }
        }
        let masking = stage == 3 && !settings.ablations.no_masking && settings.augment.mask_probability > 0.0;
        let use_msr = uses_msr(stage, settings.ablations);
        let mut opt = Optimizer::new(sched);
        let mut last_loss = None;
        for epoch in start..epochs {
            let t0 = Instant::now();
            let epoch_seed = mix(mix(settings.seed, stage as u64), epoch as u64);
            let mut order: Vec<usize> = (0..train.len()).collect();
            order.shuffle(&mut stream_rng(epoch_seed, u64::MAX));
            let mut sums = StepLoss::default();
            for (bi, idx) in order.chunks(sched.batch_size).enumerate() {
                let prepared = par::map_indexed(idx.len(), |j| {
                    let mut rng = stream_rng(epoch_seed, idx[j] as u64);
                    prepare_sample(&train[idx[j]], net, settings, masking, &mut rng)
                })
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
                let (step, grads) = batch_gradients(net, &prepared, mode, &loss_cfg, &settings.graph)?;
                if !step.total.is_finite() || !grads.all_finite() {
                    let dump = FailureDump {
                        stage,
                        epoch,
                        batch: bi,
                        sample_indices: idx,
                        learning_rate: plateau.learning_rate,
                        loss_total: step.total,
                        loss_ms: step.ms,
                        loss_structural: step.structural,
                        gradients_finite: grads.all_finite(),
                        parameters_finite: net.params().all_finite(),
                        gradient_norm: grads.global_norm(),
                    };
                    let mut msg = format!("stage {stage} epoch {epoch} batch {bi}: loss {}", step.total);
                    if let Some(dir) = &control.out_dir {
                        fs::create_dir_all(dir)?;
                        let p = dir.join(DUMP_FILE);
                        fs::write(&p, serde_json::to_string_pretty(&dump)?)?;
                        msg.push_str(&format!(" (state dumped to {})", p.display()));
                    } else {
                        msg.push_str(&format!(" ({})", serde_json::to_string(&dump)?));
                    }
                    return Err(Error::NonFiniteLoss(msg));
                }
                opt.step(net.params_mut(), &grads, plateau.learning_rate);
                let k = idx.len() as f64 / train.len() as f64;
                sums.total += step.total * k;
                sums.ms += step.ms * k;
                sums.structural += step.structural * k;
            }
            let val_pckh = if val.is_empty() { None } else { Some(pckh(net, val, use_msr)?) };
            let rec = EpochRecord {
                stage,
                epoch,
                learning_rate: plateau.learning_rate,
                loss_total: sums.total,
                loss_ms: sums.ms,
                loss_structural: sums.structural,
                val_pckh,
                seconds: t0.elapsed().as_secs_f64(),
            };
            log::info!(
                "stage {stage} epoch {}/{epochs}: loss {:.5} (ms {:.5}, structural {:.5}) val pckh {} lr {:.2e}",
                epoch + 1,
                rec.loss_total,
                rec.loss_ms,
                rec.loss_structural,
                val_pckh.map_or("-".to_string(), |v| format!("{v:.4}")),
                rec.learning_rate
            );
            // Plateau decay on validation PCKh, or on the training loss
            // when there is no validation split.
            let monitored = val_pckh.unwrap_or(-sums.total);
            if plateau.best.is_none_or(|b| monitored > b) {
                plateau.best = Some(monitored);
                plateau.bad_epochs = 0;
            } else {
                plateau.bad_epochs += 1;
                if plateau.bad_epochs >= sched.plateau_patience {
                    plateau.learning_rate /= sched.plateau_factor;
                    plateau.bad_epochs = 0;
                    log::info!("plateau: learning rate now {:.2e}", plateau.learning_rate);
                }
            }
            last_loss = Some(rec.loss_total);
            if let Some(dir) = &control.out_dir {
                fs::create_dir_all(dir)?;
                append_log(dir, &rec)?;
            }
            report.epochs.push(rec);
            if let Some(dir) = &control.out_dir {
                let meta = CheckpointMeta {
                    model: net.config().clone(),
                    config_hash: settings.config_hash.clone(),
                    stage,
                    epoch: epoch + 1,
                    stage_complete: epoch + 1 == epochs,
                    seed: settings.seed,
                    ablations: settings.ablations,
                    plateau,
                    history: report.epochs.clone(),
                };
                save_checkpoint(&checkpoint_dir(dir, "last"), net, &meta)?;
                if meta.stage_complete {
                    save_checkpoint(&checkpoint_dir(dir, &format!("stage{stage}")), net, &meta)?;
                }
            }
        }
        let stage_epochs = report.epochs.iter().filter(|e| e.stage == stage);
        report.stages.push(StageRecord {
            stage,
            epochs: stage_epochs.clone().count(),
            final_learning_rate: plateau.learning_rate,
            best_val_pckh: stage_epochs.filter_map(|e| e.val_pckh).fold(None, |a: Option<f64>, v| Some(a.map_or(v, |a| a.max(v)))),
            final_loss: last_loss,
        });
    }
    Ok(report)
}

pub fn checkpoint_dir(run_dir: &Path, name: &str) -> PathBuf {
    run_dir.join("checkpoints").join(name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_samples, DatasetManifest};
    use crate::model::ModelConfig;

    fn tiny_net() -> PoseNet {
        PoseNet::new(
            ModelConfig {
                num_stacks: 1,
                hourglass_depth: 2,
                base_channels: 8,
                input_resolution: (32, 32),
                msr_channels: 8,
                ..Default::default()
            },
            1,
        )
        .unwrap()
    }

    fn settings() -> TrainSettings {
        TrainSettings {
            loss: LossConfig::default(),
            augment: AugmentConfig::default(),
            schedule: Schedule {
                stage_epochs: [1, 1, 1],
                batch_size: 4,
                ..Default::default()
            },
            graph: SkeletalGraph::default(),
            sigma: 1.0,
            seed: 3,
            ablations: Ablations::default(),
            config_hash: "test".into(),
        }
    }

    fn samples(n: usize) -> Vec<Sample> {
        generate_samples(&DatasetManifest {
            count: n,
            resolution: (32, 32),
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn one_epoch_per_stage_gives_three_records() {
        let mut net = tiny_net();
        let data = samples(6);
        let r = staged_training(&mut net, &data[..4], &data[4..], &settings(), &RunControl::default()).unwrap();
        assert_eq!(r.stages.len(), 3);
        assert_eq!(r.epochs.len(), 3);
        assert!(r.epochs.iter().all(|e| e.loss_total.is_finite() && e.val_pckh.is_some()));
    }

    #[test]
    fn stage_two_freezes_mss() {
        let mut net = tiny_net();
        let before = net.clone();
        let data = samples(4);
        let control = RunControl {
            stages: vec![2],
            ..Default::default()
        };
        staged_training(&mut net, &data, &[], &settings(), &control).unwrap();
        let mut head_changed = false;
        for id in net.params().ids() {
            let same = net.params().get(id) == before.params().get(id);
            if net.is_mss_param(id) {
                assert!(same, "{} moved", net.params().name(id));
            } else {
                head_changed |= !same;
            }
        }
        assert!(head_changed);
    }

    #[test]
    fn ablation_names_round_trip() {
        for a in Ablation::ALL {
            assert_eq!(a.name().parse::<Ablation>().unwrap(), a);
        }
        assert!("no-such".parse::<Ablation>().is_err());
        let l = Ablations::default()
            .with(Ablation::NoMultiscaleSupervision)
            .with(Ablation::NoStructureLoss)
            .apply_to_loss(&LossConfig::default(), 3);
        assert_eq!(l.scale_weights, vec![1.0, 0.0, 0.0]);
        assert_eq!(l.alpha, 0.0);
    }

    #[test]
    fn empty_training_split_is_rejected() {
        let mut net = tiny_net();
        assert!(staged_training(&mut net, &[], &[], &settings(), &RunControl::default()).is_err());
    }
}
