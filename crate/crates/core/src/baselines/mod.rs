//! Reference schedulers: exhaustive search, greedy activation and the
//! simple heuristics used for comparison.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::netgen::{active_set_rate, layout_channel, ChannelConfig, ChannelMatrix, DatasetEntry, OracleProvenance, ScheduleVector};
use crate::seed::{derive_seed, rng_from, stream};

/// Largest instance the exhaustive search accepts.
pub const BRUTE_FORCE_LIMIT: usize = 20;

/// Up to this many links the default normalizer is the exact optimum.
pub const DEFAULT_EXACT_MAX: usize = 12;

/// Candidate fractions for the strongest-link-first rule.
pub const STRONGEST_FRACTIONS: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleKind {
    BruteForce,
    Greedy,
    /// Activate the `ceil(f * L)` strongest direct links.
    StrongestFraction(f64),
    /// Activate each link independently with probability `p`.
    RandomActive(f64),
    AllActive,
}

impl OracleKind {
    /// Exact search for small networks, greedy otherwise.
    pub fn default_for(num_links: usize) -> Self {
        if num_links <= DEFAULT_EXACT_MAX {
            OracleKind::BruteForce
        } else {
            OracleKind::Greedy
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            OracleKind::StrongestFraction(f) if !(f > 0.0 && f <= 1.0) => {
                Err(Error::Config(format!("strongest fraction must lie in (0, 1], got {f}")))
            }
            OracleKind::RandomActive(p) if !(0.0..=1.0).contains(&p) => {
                Err(Error::Config(format!("activation probability must lie in [0, 1], got {p}")))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OracleKind::BruteForce => "brute",
            OracleKind::Greedy => "greedy",
            OracleKind::StrongestFraction(_) => "strongest",
            OracleKind::RandomActive(_) => "random",
            OracleKind::AllActive => "all",
        }
    }

    pub fn provenance(&self) -> OracleProvenance {
        let mut params = Map::new();
        match *self {
            OracleKind::StrongestFraction(f) => {
                params.insert("fraction".into(), Value::from(f));
            }
            OracleKind::RandomActive(p) => {
                params.insert("probability".into(), Value::from(p));
            }
            _ => {}
        }
        OracleProvenance { kind: self.name().to_string(), params }
    }
}

impl fmt::Display for OracleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleKind::StrongestFraction(x) => write!(f, "strongest:{x}"),
            OracleKind::RandomActive(p) => write!(f, "random:{p}"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for OracleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let number = |default: f64| -> Result<f64> {
            arg.map_or(Ok(default), |a| {
                a.parse::<f64>().map_err(|_| Error::Config(format!("bad oracle parameter in {s:?}")))
            })
        };
        let kind = match name {
            "brute" | "bruteforce" | "optimal" => OracleKind::BruteForce,
            "greedy" => OracleKind::Greedy,
            "strongest" => OracleKind::StrongestFraction(number(0.2)?),
            "random" => OracleKind::RandomActive(number(0.5)?),
            "all" | "all-active" => OracleKind::AllActive,
            _ => return Err(Error::Config(format!("unknown oracle {s:?}"))),
        };
        kind.validate()?;
        Ok(kind)
    }
}

impl serde::Serialize for OracleKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for OracleKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The schedule with the largest sum rate, found by enumerating all `2^L`
/// activation patterns. Patterns are visited in lexicographic order of the
/// activation vector and only a strictly better one replaces the incumbent,
/// so ties resolve to the lexicographically smallest vector.
pub fn brute_force_optimal(ch: &ChannelMatrix) -> Result<ScheduleVector> {
    let n = ch.num_links;
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::Size { size: n, limit: BRUTE_FORCE_LIMIT });
    }
    let mut best_mask = 0u32;
    let mut best_rate = 0.0;
    let mut active = Vec::with_capacity(n);
    // Bit (n - 1 - l) of the mask is link l, so counting up walks the
    // activation vectors in lexicographic order.
    for mask in 1u32..(1u32 << n) {
        active.clear();
        active.extend((0..n).filter(|&l| mask >> (n - 1 - l) & 1 == 1));
        let rate = active_set_rate(ch, &active);
        if rate > best_rate {
            best_rate = rate;
            best_mask = mask;
        }
    }
    Ok(ScheduleVector::new((0..n).map(|l| best_mask >> (n - 1 - l) & 1 == 1).collect()))
}

/// Visits links from strongest to weakest direct gain (index order on ties)
/// and keeps each one only if it strictly raises the total rate.
pub fn greedy_schedule(ch: &ChannelMatrix) -> ScheduleVector {
    let n = ch.num_links;
    let mut active: Vec<usize> = Vec::with_capacity(n);
    let mut current = 0.0;
    for l in strongest_first(ch) {
        let pos = active.partition_point(|&k| k < l);
        active.insert(pos, l);
        let rate = active_set_rate(ch, &active);
        if rate > current {
            current = rate;
        } else {
            active.remove(pos);
        }
    }
    let mut rho = vec![false; n];
    for l in active {
        rho[l] = true;
    }
    ScheduleVector::new(rho)
}

/// Link indices sorted by decreasing direct gain, stable in index order.
fn strongest_first(ch: &ChannelMatrix) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ch.num_links).collect();
    order.sort_by(|&a, &b| ch.direct(b).total_cmp(&ch.direct(a)));
    order
}

/// Runs any scheduler kind; `seed` only matters for random activation.
pub fn heuristic_schedule(ch: &ChannelMatrix, kind: OracleKind, seed: u64) -> Result<ScheduleVector> {
    kind.validate()?;
    let n = ch.num_links;
    Ok(match kind {
        OracleKind::BruteForce => brute_force_optimal(ch)?,
        OracleKind::Greedy => greedy_schedule(ch),
        OracleKind::AllActive => ScheduleVector::all(n, true),
        OracleKind::StrongestFraction(f) => {
            // Guard against products like 0.3 * 10 = 3.0000000000000004.
            let count = ((f * n as f64) - 1e-9).ceil().clamp(0.0, n as f64) as usize;
            let mut rho = vec![false; n];
            for l in strongest_first(ch).into_iter().take(count) {
                rho[l] = true;
            }
            ScheduleVector::new(rho)
        }
        OracleKind::RandomActive(p) => {
            let mut rng = rng_from(seed);
            ScheduleVector::new((0..n).map(|_| rng.random::<f64>() < p).collect())
        }
    })
}

/// Labels every entry with the given oracle's schedule, computing each
/// layout's channel with its recorded shadowing deviation.
pub fn label_dataset(entries: &[DatasetEntry], ch_cfg: &ChannelConfig, oracle: OracleKind) -> Result<Vec<DatasetEntry>> {
    oracle.validate()?;
    entries
        .par_iter()
        .map(|entry| {
            let ch = layout_channel(&entry.layout, &ch_cfg.with_shadowing(entry.shadowing_std))?;
            let seed = derive_seed(entry.layout.seed(), stream::HEURISTIC);
            let label = heuristic_schedule(&ch, oracle, seed)?;
            Ok(DatasetEntry {
                label: Some(label),
                oracle: Some(oracle.provenance()),
                ..entry.clone()
            })
        })
        .collect()
}
