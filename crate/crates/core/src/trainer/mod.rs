//! Supervised and unsupervised training with hold-out early stopping,
//! evaluation against a reference scheduler, and experiment sweeps.

pub mod eval;
pub mod presets;
pub mod report;
pub mod sweep;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{heuristic_schedule, OracleKind};
use crate::embednn::{
    backward_batch, forward_batch, refresh_running_stats, schedule, update_running_stats, AdamConfig, AdamState, Architecture, LossTarget,
    Matrix, Mode, ModelParams,
};
use crate::error::{Error, Result};
use crate::graph::{build_graph, QuantizerSpec, SchedGraph};
use crate::netgen::{layout_channel, sum_rate, ChannelConfig, ChannelMatrix, DatasetEntry, NetworkLayout, ScheduleVector};
use crate::seed::{derive_seed, rng_from, stream};

pub use eval::{evaluate, evaluate_samples, tune_strongest_fraction, EvalReport, LayoutResult, Scheduler};
pub use presets::{table_experiments, ReproOptions, ReproTable};
pub use sweep::{baseline_rows, run_experiment, sweep, test_experiment, train_experiment, ExperimentConfig, ExperimentResult, Scenario, SweepRow};

/// Penalty weights tried when unsupervised training collapses to full activation.
pub const OMEGA_CANDIDATES: [f64; 3] = [0.005, 0.01, 0.02];
/// Mean validation activation above which the penalty is tuned.
pub const COLLAPSE_THRESHOLD: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Supervised,
    Unsupervised,
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainMode::Supervised => "sup",
            TrainMode::Unsupervised => "unsup",
        })
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sup" | "supervised" => Ok(TrainMode::Supervised),
            "unsup" | "unsupervised" => Ok(TrainMode::Unsupervised),
            _ => Err(Error::Config(format!("unknown training mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub epochs_max: usize,
    /// Layouts per optimizer step.
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub val_fraction: f64,
    /// Activation penalty of the unsupervised loss.
    pub omega: f64,
    pub seed: u64,
    pub arch: Architecture,
    /// Scheduler whose sum rate normalizes the validation ratio.
    pub normalizer: OracleKind,
    pub channel: ChannelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Supervised,
            epochs_max: 100,
            batch_size: 16,
            adam: AdamConfig::default(),
            patience: 10,
            val_fraction: 0.1,
            omega: 0.0,
            seed: 0,
            arch: Architecture::default(),
            normalizer: OracleKind::Greedy,
            channel: ChannelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs_max == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs_max and batch_size must be at least 1".into()));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Config(format!("val_fraction must lie in (0, 1), got {}", self.val_fraction)));
        }
        if !(self.omega >= 0.0) {
            return Err(Error::Config(format!("omega must be non-negative, got {}", self.omega)));
        }
        self.adam.validate()?;
        self.arch.validate()?;
        self.normalizer.validate()?;
        self.channel.validate()
    }

    /// SHA-256 of the canonical JSON form, recorded in checkpoints.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// A layout with everything training and evaluation need precomputed.
#[derive(Debug, Clone)]
pub struct Sample {
    pub layout: NetworkLayout,
    pub channel: ChannelMatrix,
    pub graph: SchedGraph,
    pub label: Option<ScheduleVector>,
    /// Normalizer schedule and its sum rate.
    pub reference: ScheduleVector,
    pub reference_rate: f64,
}

/// Builds channels, graphs and normalizer schedules for `entries`.
pub fn prepare_samples(
    entries: &[DatasetEntry],
    arch: &Architecture,
    ch_cfg: &ChannelConfig,
    normalizer: OracleKind,
) -> Result<Vec<Sample>> {
    ch_cfg.validate()?;
    normalizer.validate()?;
    entries
        .par_iter()
        .map(|e| {
            let channel = layout_channel(&e.layout, &ch_cfg.with_shadowing(e.shadowing_std))?;
            let spec = QuantizerSpec::for_layout(&e.layout.config, arch.bits);
            let graph = build_graph(&e.layout, &spec, arch.topology)?;
            let reference =
                heuristic_schedule(&channel, normalizer, derive_seed(e.layout.seed(), stream::HEURISTIC))?;
            let reference_rate = sum_rate(&channel, &reference)?.total;
            Ok(Sample { layout: e.layout.clone(), channel, graph, label: e.label.clone(), reference, reference_rate })
        })
        .collect()
}

/// `achieved / reference`, with `0 / 0` read as a perfect match.
pub fn rate_ratio(achieved: f64, reference: f64) -> f64 {
    if reference > 0.0 {
        achieved / reference
    } else if achieved > 0.0 {
        f64::INFINITY
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-layout training loss.
    pub train_loss: f64,
    pub val_ratio: f64,
    /// Link-level agreement with the normalizer on the validation layouts.
    pub val_accuracy: f64,
    pub val_active_fraction: f64,
    pub improved: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ModelParams,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_ratio: f64,
    /// Penalty weight the returned model was trained with.
    pub omega: f64,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

/// Seeded split into (train, validation) indices. A single layout is used
/// for both.
pub fn split_indices(n: usize, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    if n < 2 {
        return (idx.clone(), idx);
    }
    idx.shuffle(&mut rng_from(derive_seed(seed, stream::SPLIT)));
    let n_val = ((val_fraction * n as f64).ceil() as usize).clamp(1, n - 1);
    let val = idx.split_off(n - n_val);
    (idx, val)
}

/// Validation metrics: mean ratio, accuracy against the normalizer, mean
/// active fraction.
pub fn validation_metrics(model: &ModelParams, samples: &[&Sample]) -> Result<(f64, f64, f64)> {
    let rows = samples
        .par_iter()
        .map(|s| {
            let sched = schedule(model, &s.graph)?;
            let rate = sum_rate(&s.channel, &sched)?.total;
            let agree = sched.rho.iter().zip(&s.reference.rho).filter(|(a, b)| a == b).count();
            let n = sched.len().max(1) as f64;
            Ok((rate_ratio(rate, s.reference_rate), agree as f64 / n, sched.active_count() as f64 / n))
        })
        .collect::<Result<Vec<_>>>()?;
    let m = rows.len().max(1) as f64;
    let sum = rows.iter().fold((0.0, 0.0, 0.0), |a, r| (a.0 + r.0, a.1 + r.1, a.2 + r.2));
    Ok((sum.0 / m, sum.1 / m, sum.2 / m))
}

fn loss_target<'a>(s: &'a Sample, cfg: &TrainConfig) -> LossTarget<'a> {
    match cfg.mode {
        TrainMode::Supervised => LossTarget::Labels(&s.label.as_ref().expect("labels checked before training").rho),
        TrainMode::Unsupervised => LossTarget::Rate { channel: &s.channel, omega: cfg.omega },
    }
}

/// One optimizer step on a mini-batch; returns the summed per-layout loss.
fn train_step(model: &mut ModelParams, adam: &mut AdamState, batch: &[&Sample], cfg: &TrainConfig) -> Result<f64> {
    let graphs: Vec<&SchedGraph> = batch.iter().map(|s| &s.graph).collect();
    let fwd = forward_batch(model, &graphs, Mode::Train)?;
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    let mut parts = Vec::with_capacity(batch.len());
    for (i, s) in batch.iter().enumerate() {
        let (loss, mut d) = loss_target(s, cfg).eval(&fwd.probs(i))?;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("loss is {loss} on layout with seed {}", s.layout.seed())));
        }
        d.data.iter_mut().for_each(|x| *x *= scale);
        total += loss;
        parts.push(d);
    }
    let d_logits = Matrix::vstack(&parts.iter().collect::<Vec<_>>());
    model.zero_grad();
    backward_batch(model, &graphs, &fwd, &d_logits)?;
    if model.grad.flatten().iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical("non-finite gradient".into()));
    }
    update_running_stats(&mut model.clf, &fwd.clf);
    adam.step(model, &cfg.adam)?;
    if !model.is_finite() {
        return Err(Error::Numerical(format!("parameters became non-finite after step {}", adam.step)));
    }
    Ok(total)
}

/// Trains a model, keeping the parameters of the epoch with the best
/// validation sum-rate ratio.
pub fn train(samples: &[Sample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    if cfg.mode == TrainMode::Supervised {
        if let Some(i) = samples.iter().position(|s| s.label.is_none()) {
            return Err(Error::Input(format!("supervised training needs labels; layout {i} has none")));
        }
    }
    for s in samples {
        crate::embednn::check_compatible(&cfg.arch, &s.graph)?;
        if let Some(label) = &s.label {
            if label.len() != s.graph.num_nodes {
                return Err(Error::Input("label length differs from the number of links".into()));
            }
        }
    }
    let (train_idx, val_idx) = split_indices(samples.len(), cfg.val_fraction, cfg.seed);
    let val: Vec<&Sample> = val_idx.iter().map(|&i| &samples[i]).collect();
    let mut order: Vec<&Sample> = train_idx.iter().map(|&i| &samples[i]).collect();

    let mut model = ModelParams::init(cfg.arch, derive_seed(cfg.seed, stream::INIT))?;
    let mut adam = AdamState::new(&model);
    let mut shuffle_rng = rng_from(derive_seed(cfg.seed, stream::SHUFFLE));

    let mut history = Vec::new();
    let mut best: Option<(ModelParams, usize, f64)> = None;
    let mut stale = 0;
    for epoch in 1..=cfg.epochs_max {
        order.shuffle(&mut shuffle_rng);
        let mut loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            loss += train_step(&mut model, &mut adam, batch, cfg)
                .map_err(|e| match e {
                    Error::Numerical(msg) => Error::Numerical(format!("epoch {epoch}: {msg}")),
                    other => other,
                })?;
        }
        // eval-mode statistics for this epoch's weights, over this epoch's batches
        let batches: Vec<Vec<&SchedGraph>> =
            order.chunks(cfg.batch_size).map(|b| b.iter().map(|s| &s.graph).collect()).collect();
        refresh_running_stats(&mut model, &batches)?;
        let (val_ratio, val_accuracy, val_active) = validation_metrics(&model, &val)?;
        let improved = best.as_ref().is_none_or(|b| val_ratio > b.2);
        if improved {
            let mut snapshot = model.clone();
            snapshot.zero_grad();
            best = Some((snapshot, epoch, val_ratio));
            stale = 0;
        } else {
            stale += 1;
        }
        history.push(EpochRecord {
            epoch,
            train_loss: loss / order.len() as f64,
            val_ratio,
            val_accuracy,
            val_active_fraction: val_active,
            improved,
        });
        if stale >= cfg.patience {
            break;
        }
    }
    let (model, best_epoch, best_val_ratio) = best.expect("at least one epoch runs");
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        best_val_ratio,
        omega: cfg.omega,
        train_indices: train_idx,
        val_indices: val_idx,
    })
}

/// Unsupervised training that retries with each penalty in
/// [`OMEGA_CANDIDATES`] when the first model activates more than
/// [`COLLAPSE_THRESHOLD`] of the validation links, keeping the candidate
/// with the best validation ratio.
pub fn train_unsupervised_tuned(samples: &[Sample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    let cfg = TrainConfig { mode: TrainMode::Unsupervised, ..cfg.clone() };
    let first = train(samples, &cfg)?;
    let val: Vec<&Sample> = first.val_indices.iter().map(|&i| &samples[i]).collect();
    let (_, _, active) = validation_metrics(&first.model, &val)?;
    if active <= COLLAPSE_THRESHOLD {
        return Ok(first);
    }
    let mut best = first;
    for omega in OMEGA_CANDIDATES {
        let run = train(samples, &TrainConfig { omega, ..cfg.clone() })?;
        if run.best_val_ratio > best.best_val_ratio {
            best = run;
        }
    }
    Ok(best)
}
