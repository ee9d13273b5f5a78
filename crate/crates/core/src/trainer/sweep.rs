//! End-to-end experiments: generate, label, train, evaluate.

use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::eval::{evaluate_samples, tune_strongest_fraction, EvalReport, Scheduler};
use super::{prepare_samples, train, train_unsupervised_tuned, TrainConfig, TrainMode, TrainOutcome};
use crate::baselines::{label_dataset, OracleKind};
use crate::embednn::ModelParams;
use crate::error::Result;
use crate::netgen::{generate_layouts, DatasetEntry, LayoutConfig};

/// A family of random layouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Base configuration; its seed determines every layout.
    pub layout: LayoutConfig,
    pub shadowing_std: f64,
    pub count: usize,
}

impl Scenario {
    pub fn entries(&self) -> Result<Vec<DatasetEntry>> {
        Ok(generate_layouts(&self.layout, self.count)?
            .into_iter()
            .map(|l| DatasetEntry::unlabeled(l, self.shadowing_std))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub train: Scenario,
    pub test: Scenario,
    pub train_cfg: TrainConfig,
    /// Label source for supervised training.
    pub label_oracle: OracleKind,
    /// Tune the penalty when unsupervised training collapses.
    pub tune_omega: bool,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub name: String,
    pub outcome: TrainOutcome,
    pub report: EvalReport,
    pub train_secs: f64,
}

impl ExperimentConfig {
    /// Canonical description of everything that determines the trained model.
    fn training_key(&self) -> String {
        serde_json::to_string(&(&self.train, &self.train_cfg, self.label_oracle, self.tune_omega))
            .expect("experiment serializes")
    }
}

/// Generates and labels the training scenario, then trains.
pub fn train_experiment(exp: &ExperimentConfig) -> Result<(TrainOutcome, f64)> {
    let cfg = &exp.train_cfg;
    cfg.validate()?;
    let mut train_entries = exp.train.entries()?;
    if cfg.mode == TrainMode::Supervised {
        train_entries = label_dataset(&train_entries, &cfg.channel, exp.label_oracle)?;
    }
    let train_samples = prepare_samples(&train_entries, &cfg.arch, &cfg.channel, cfg.normalizer)?;
    let start = Instant::now();
    let outcome = if cfg.mode == TrainMode::Unsupervised && exp.tune_omega {
        train_unsupervised_tuned(&train_samples, cfg)?
    } else {
        train(&train_samples, cfg)?
    };
    Ok((outcome, start.elapsed().as_secs_f64()))
}

/// Evaluates a trained model on the experiment's test scenario.
pub fn test_experiment(exp: &ExperimentConfig, model: &ModelParams) -> Result<EvalReport> {
    let cfg = &exp.train_cfg;
    let test_samples = prepare_samples(&exp.test.entries()?, &model.arch, &cfg.channel, cfg.normalizer)?;
    evaluate_samples(Scheduler::Model(model), &test_samples, cfg.normalizer)
}

/// Generates, labels, trains and evaluates one configuration.
pub fn run_experiment(exp: &ExperimentConfig) -> Result<ExperimentResult> {
    let (outcome, train_secs) = train_experiment(exp)?;
    let report = test_experiment(exp, &outcome.model)?;
    Ok(ExperimentResult { name: exp.name.clone(), outcome, report, train_secs })
}

/// Baseline rows for the algorithms table, evaluated on the same test
/// layouts as `learned`: greedy, strongest-first with the fraction tuned on
/// the training layouts, random activation, all active, and the normalizer
/// itself.
pub fn baseline_rows(exp: &ExperimentConfig) -> Result<Vec<(SweepRow, EvalReport)>> {
    let cfg = &exp.train_cfg;
    let norm = cfg.normalizer;
    let train_samples = prepare_samples(&exp.train.entries()?, &cfg.arch, &cfg.channel, norm)?;
    let fraction = tune_strongest_fraction(&train_samples, norm)?;
    let test_samples = prepare_samples(&exp.test.entries()?, &cfg.arch, &cfg.channel, norm)?;
    let kinds = [
        ("greedy", OracleKind::Greedy),
        ("strongest", OracleKind::StrongestFraction(fraction)),
        ("random", OracleKind::RandomActive(0.5)),
        ("all-active", OracleKind::AllActive),
        ("oracle", norm),
    ];
    kinds
        .into_iter()
        .map(|(name, kind)| {
            let report = evaluate_samples(Scheduler::Baseline(kind), &test_samples, norm)?;
            let row = SweepRow {
                name: name.into(),
                status: "ok".into(),
                ratio: report.avg_sum_rate_ratio,
                accuracy: report.classifier_accuracy,
                active_fraction: report.avg_active_fraction,
                epochs: 0,
                best_epoch: 0,
                omega: f64::NAN,
                train_secs: 0.0,
                error: String::new(),
            };
            Ok((row, report))
        })
        .collect()
}

/// One line of a sweep table. Failed cells carry the error text and NaN
/// metrics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub name: String,
    pub status: String,
    pub ratio: f64,
    pub accuracy: f64,
    pub active_fraction: f64,
    pub epochs: usize,
    pub best_epoch: usize,
    pub omega: f64,
    pub train_secs: f64,
    pub error: String,
}

impl SweepRow {
    pub fn from_result(name: &str, res: &Result<ExperimentResult>) -> Self {
        match res {
            Ok(r) => SweepRow {
                name: name.to_string(),
                status: "ok".into(),
                ratio: r.report.avg_sum_rate_ratio,
                accuracy: r.report.classifier_accuracy,
                active_fraction: r.report.avg_active_fraction,
                epochs: r.outcome.history.len(),
                best_epoch: r.outcome.best_epoch,
                omega: r.outcome.omega,
                train_secs: r.train_secs,
                error: String::new(),
            },
            Err(e) => SweepRow {
                name: name.to_string(),
                status: "error".into(),
                ratio: f64::NAN,
                accuracy: f64::NAN,
                active_fraction: f64::NAN,
                epochs: 0,
                best_epoch: 0,
                omega: f64::NAN,
                train_secs: 0.0,
                error: e.to_string(),
            },
        }
    }
}

/// Runs every configuration in order; a failing cell does not stop the
/// others. Cells with identical training setups share one trained model.
pub fn sweep(experiments: &[ExperimentConfig]) -> Vec<(SweepRow, Result<ExperimentResult>)> {
    let mut trained: HashMap<String, (TrainOutcome, f64)> = HashMap::new();
    experiments
        .iter()
        .map(|exp| {
            let key = exp.training_key();
            let res = match trained.get(&key) {
                Some(t) => Ok(t.clone()),
                None => train_experiment(exp).inspect(|t| {
                    trained.insert(key, t.clone());
                }),
            }
            .and_then(|(outcome, train_secs)| {
                let report = test_experiment(exp, &outcome.model)?;
                Ok(ExperimentResult { name: exp.name.clone(), outcome, report, train_secs })
            });
            (SweepRow::from_result(&exp.name, &res), res)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embednn::Architecture;

    fn exp(name: &str, epochs: usize) -> ExperimentConfig {
        let layout = LayoutConfig { num_pairs: 6, ..Default::default() };
        ExperimentConfig {
            name: name.into(),
            train: Scenario { layout: layout.with_seed(1), shadowing_std: 0.0, count: 8 },
            test: Scenario { layout: layout.with_seed(2), shadowing_std: 0.0, count: 4 },
            train_cfg: TrainConfig {
                epochs_max: epochs,
                arch: Architecture { embed_dim: 4, hidden: 4, ..Default::default() },
                normalizer: OracleKind::BruteForce,
                ..Default::default()
            },
            label_oracle: OracleKind::BruteForce,
            tune_omega: false,
        }
    }

    #[test]
    fn failing_cells_are_recorded_and_others_run() {
        let rows = sweep(&[exp("bad", 0), exp("good", 2)]);
        assert_eq!(rows[0].0.status, "error");
        assert!(rows[0].0.error.contains("epochs_max"));
        assert_eq!(rows[1].0.status, "ok");
        assert_eq!(rows[1].1.as_ref().unwrap().report.num_layouts, 4);
    }

    #[test]
    fn identical_training_is_shared() {
        let a = exp("a", 2);
        let mut b = exp("b", 2);
        b.test.shadowing_std = 8.0;
        let rows = sweep(&[a, b]);
        let (ra, rb) = (rows[0].1.as_ref().unwrap(), rows[1].1.as_ref().unwrap());
        assert_eq!(ra.outcome.model, rb.outcome.model);
        assert_ne!(ra.report.layouts[0].achieved_rate, rb.report.layouts[0].achieved_rate);
    }

    #[test]
    fn baseline_rows_cover_the_algorithms() {
        let rows = baseline_rows(&exp("x", 1)).unwrap();
        let names: Vec<_> = rows.iter().map(|r| r.0.name.as_str()).collect();
        assert_eq!(names, ["greedy", "strongest", "random", "all-active", "oracle"]);
        assert_eq!(rows[4].0.ratio, 1.0);
        assert!(rows.iter().all(|r| r.0.ratio <= 1.0 + 1e-12));
    }

    #[test]
    fn scenario_entries_carry_shadowing() {
        let s = Scenario { layout: LayoutConfig { num_pairs: 3, ..Default::default() }, shadowing_std: 5.0, count: 2 };
        let e = s.entries().unwrap();
        assert_eq!(e.len(), 2);
        assert!(e.iter().all(|x| x.shadowing_std == 5.0 && x.label.is_none()));
    }
}
