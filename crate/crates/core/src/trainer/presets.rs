//! Experiment grids for the reproduction tables.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::sweep::{ExperimentConfig, Scenario};
use super::{TrainConfig, TrainMode};
use crate::baselines::OracleKind;
use crate::error::{Error, Result};
use crate::graph::Topology;
use crate::netgen::LayoutConfig;
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReproTable {
    /// Mean-field iterations `T`.
    Iterations,
    /// Quantization bits `q`.
    Bits,
    /// Nearest-neighbour graphs.
    Knn,
    /// Number of pairs.
    Pairs,
    /// Pair-distance ranges, supervised and unsupervised.
    Distance,
    /// Shadowing deviation, full training and generalization.
    Shadowing,
    /// Learned model against the baselines.
    Algorithms,
}

impl ReproTable {
    pub const ALL: [ReproTable; 7] = [
        ReproTable::Iterations,
        ReproTable::Bits,
        ReproTable::Knn,
        ReproTable::Pairs,
        ReproTable::Distance,
        ReproTable::Shadowing,
        ReproTable::Algorithms,
    ];
}

impl fmt::Display for ReproTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReproTable::Iterations => "T",
            ReproTable::Bits => "q",
            ReproTable::Knn => "K",
            ReproTable::Pairs => "L",
            ReproTable::Distance => "dist",
            ReproTable::Shadowing => "shadow",
            ReproTable::Algorithms => "algos",
        })
    }
}

impl FromStr for ReproTable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ReproTable::ALL
            .into_iter()
            .find(|t| t.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown table {s:?}; expected one of T, q, K, L, dist, shadow, algos")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproOptions {
    pub pairs: usize,
    pub train_count: usize,
    pub test_count: usize,
    pub seed: u64,
    /// Adds the L = 500 row to the pairs table.
    pub big: bool,
    /// Training settings shared by every cell.
    pub base: TrainConfig,
}

impl Default for ReproOptions {
    fn default() -> Self {
        Self { pairs: 50, train_count: 500, test_count: 1000, seed: 0, big: false, base: TrainConfig::default() }
    }
}

pub const SHADOWING_STDS: [f64; 5] = [0.0, 3.0, 5.0, 8.0, 10.0];
pub const PAIR_COUNTS: [usize; 5] = [10, 30, 50, 80, 100];
pub const KNN_SIZES: [usize; 4] = [10, 20, 30, 40];
/// `(d_min, d_max)` ranges; equal bounds mean every pair has that length.
pub const DISTANCE_RANGES: [(f64, f64); 4] = [(2.0, 65.0), (10.0, 50.0), (30.0, 70.0), (30.0, 30.0)];

impl ReproOptions {
    fn scenario(&self, layout: LayoutConfig, shadowing_std: f64, train: bool) -> Scenario {
        let (stream, count) = if train { (1, self.train_count) } else { (2, self.test_count) };
        Scenario { layout: layout.with_seed(derive_seed(self.seed, stream)), shadowing_std, count }
    }

    /// One cell: `layout` for both sets, oracle chosen by size.
    pub fn experiment(&self, name: String, layout: LayoutConfig, cfg: TrainConfig) -> ExperimentConfig {
        let oracle = OracleKind::default_for(layout.num_pairs);
        ExperimentConfig {
            name,
            train: self.scenario(layout.clone(), 0.0, true),
            test: self.scenario(layout, 0.0, false),
            train_cfg: TrainConfig { normalizer: oracle, seed: self.seed, ..cfg },
            label_oracle: oracle,
            tune_omega: true,
        }
    }

    fn layout(&self) -> LayoutConfig {
        LayoutConfig { num_pairs: self.pairs, ..Default::default() }
    }
}

/// The cells of `table`. The algorithms table has a single learned cell;
/// its baseline rows are evaluated on that cell's test set.
pub fn table_experiments(table: ReproTable, opts: &ReproOptions) -> Vec<ExperimentConfig> {
    let base = &opts.base;
    let layout = opts.layout();
    match table {
        ReproTable::Iterations => (1..=5)
            .map(|t| {
                let arch = crate::embednn::Architecture { iterations: t, ..base.arch };
                opts.experiment(format!("T={t}"), layout.clone(), TrainConfig { arch, ..base.clone() })
            })
            .collect(),
        ReproTable::Bits => (2..=6)
            .map(|q| {
                let arch = crate::embednn::Architecture { bits: q, ..base.arch };
                opts.experiment(format!("q={q}"), layout.clone(), TrainConfig { arch, ..base.clone() })
            })
            .collect(),
        ReproTable::Knn => KNN_SIZES
            .iter()
            .filter(|&&k| k + 1 < opts.pairs)
            .map(|&k| (format!("K={k}"), Topology::Knn(k)))
            .chain(std::iter::once((format!("K={}", opts.pairs.saturating_sub(1)), Topology::FullyConnected)))
            .map(|(name, topology)| {
                let arch = crate::embednn::Architecture { topology, ..base.arch };
                opts.experiment(name, layout.clone(), TrainConfig { arch, ..base.clone() })
            })
            .collect(),
        ReproTable::Pairs => PAIR_COUNTS
            .iter()
            .copied()
            .chain(opts.big.then_some(500))
            .map(|l| opts.experiment(format!("L={l}"), LayoutConfig { num_pairs: l, ..layout.clone() }, base.clone()))
            .collect(),
        ReproTable::Distance => DISTANCE_RANGES
            .iter()
            .flat_map(|&(lo, hi)| {
                let range = if lo == hi { format!("{lo}") } else { format!("{lo}-{hi}") };
                let l = LayoutConfig { d_min: lo, d_max: hi, ..layout.clone() };
                [TrainMode::Supervised, TrainMode::Unsupervised]
                    .map(|mode| opts.experiment(format!("dist={range}/{mode}"), l.clone(), TrainConfig { mode, ..base.clone() }))
            })
            .collect(),
        ReproTable::Shadowing => SHADOWING_STDS
            .iter()
            .flat_map(|&s| {
                let mut full = opts.experiment(format!("shadow={s}/full"), layout.clone(), base.clone());
                full.train.shadowing_std = s;
                full.test.shadowing_std = s;
                let mut general = opts.experiment(format!("shadow={s}/general"), layout.clone(), base.clone());
                general.test.shadowing_std = s;
                [full, general]
            })
            .collect(),
        ReproTable::Algorithms => vec![opts.experiment("learned".into(), layout, base.clone())],
    }
}
