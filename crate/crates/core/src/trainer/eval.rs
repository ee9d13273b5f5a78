use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::{prepare_samples, rate_ratio, Sample};
use crate::baselines::{heuristic_schedule, OracleKind, STRONGEST_FRACTIONS};
use crate::embednn::{check_compatible, schedule, ModelParams};
use crate::error::Result;
use crate::netgen::{sum_rate, ChannelConfig, DatasetEntry, ScheduleVector};
use crate::seed::{derive_seed, stream};

/// Anything that produces a schedule for a layout.
#[derive(Debug, Clone, Copy)]
pub enum Scheduler<'a> {
    Model(&'a ModelParams),
    Baseline(OracleKind),
}

impl Scheduler<'_> {
    pub fn name(&self) -> String {
        match self {
            Scheduler::Model(_) => "learned".into(),
            Scheduler::Baseline(k) => k.to_string(),
        }
    }

    fn run(&self, s: &Sample) -> Result<ScheduleVector> {
        match *self {
            Scheduler::Model(m) => schedule(m, &s.graph),
            Scheduler::Baseline(kind) => {
                heuristic_schedule(&s.channel, kind, derive_seed(s.layout.seed(), stream::HEURISTIC))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayoutResult {
    pub index: usize,
    pub seed: u64,
    pub num_links: usize,
    pub achieved_rate: f64,
    pub reference_rate: f64,
    pub ratio: f64,
    pub accuracy: f64,
    pub active_fraction: f64,
    /// Time to compute the schedule alone.
    pub schedule_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub scheduler: String,
    pub oracle: String,
    pub num_layouts: usize,
    /// Fraction of links whose decision matches the reference schedule.
    pub classifier_accuracy: f64,
    pub avg_sum_rate_ratio: f64,
    pub avg_active_fraction: f64,
    pub mean_schedule_secs: f64,
    pub total_secs: f64,
    pub layouts: Vec<LayoutResult>,
}

impl EvalReport {
    pub fn summary(&self) -> String {
        format!("accuracy={:.4}, ratio={:.4}", self.classifier_accuracy, self.avg_sum_rate_ratio)
    }
}

/// Evaluates on prepared samples whose reference schedules came from `oracle`.
pub fn evaluate_samples(scheduler: Scheduler, samples: &[Sample], oracle: OracleKind) -> Result<EvalReport> {
    let start = Instant::now();
    if let Scheduler::Model(m) = scheduler {
        for s in samples {
            check_compatible(&m.arch, &s.graph)?;
        }
    }
    let layouts = samples
        .par_iter()
        .enumerate()
        .map(|(index, s)| {
            let t0 = Instant::now();
            let sched = scheduler.run(s)?;
            let schedule_secs = t0.elapsed().as_secs_f64();
            let achieved = sum_rate(&s.channel, &sched)?.total;
            let n = sched.len().max(1) as f64;
            let agree = sched.rho.iter().zip(&s.reference.rho).filter(|(a, b)| a == b).count();
            Ok(LayoutResult {
                index,
                seed: s.layout.seed(),
                num_links: sched.len(),
                achieved_rate: achieved,
                reference_rate: s.reference_rate,
                ratio: rate_ratio(achieved, s.reference_rate),
                accuracy: agree as f64 / n,
                active_fraction: sched.active_count() as f64 / n,
                schedule_secs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let m = layouts.len().max(1) as f64;
    let mean = |f: fn(&LayoutResult) -> f64| layouts.iter().map(f).sum::<f64>() / m;
    let total_links: usize = layouts.iter().map(|l| l.num_links).sum();
    let agreeing: f64 = layouts.iter().map(|l| l.accuracy * l.num_links as f64).sum();
    Ok(EvalReport {
        scheduler: scheduler.name(),
        oracle: oracle.to_string(),
        num_layouts: layouts.len(),
        classifier_accuracy: if total_links == 0 { 1.0 } else { agreeing / total_links as f64 },
        avg_sum_rate_ratio: mean(|l| l.ratio),
        avg_active_fraction: mean(|l| l.active_fraction),
        mean_schedule_secs: mean(|l| l.schedule_secs),
        total_secs: start.elapsed().as_secs_f64(),
        layouts,
    })
}

/// The strongest-link fraction with the best mean ratio on `samples`;
/// ties go to the smaller fraction.
pub fn tune_strongest_fraction(samples: &[Sample], oracle: OracleKind) -> Result<f64> {
    let mut best = (STRONGEST_FRACTIONS[0], f64::NEG_INFINITY);
    for f in STRONGEST_FRACTIONS {
        let r = evaluate_samples(Scheduler::Baseline(OracleKind::StrongestFraction(f)), samples, oracle)?;
        if r.avg_sum_rate_ratio > best.1 {
            best = (f, r.avg_sum_rate_ratio);
        }
    }
    Ok(best.0)
}

/// Builds samples for `entries` and evaluates `scheduler` against `oracle`.
/// Graphs are built with the model's quantization and topology.
pub fn evaluate(scheduler: Scheduler, entries: &[DatasetEntry], ch_cfg: &ChannelConfig, oracle: OracleKind) -> Result<EvalReport> {
    let arch = match scheduler {
        Scheduler::Model(m) => m.arch,
        Scheduler::Baseline(_) => Default::default(),
    };
    let samples = prepare_samples(entries, &arch, ch_cfg, oracle)?;
    evaluate_samples(scheduler, &samples, oracle)
}
