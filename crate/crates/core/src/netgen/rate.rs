use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use super::channel::ChannelMatrix;
use crate::error::{Error, Result};

/// Binary activation decision for every link, optionally with the
/// probabilities it was rounded from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleVector {
    pub rho: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soft: Option<Vec<f64>>,
}

impl ScheduleVector {
    pub fn new(rho: Vec<bool>) -> Self {
        Self { rho, soft: None }
    }

    pub fn all(num_links: usize, active: bool) -> Self {
        Self::new(vec![active; num_links])
    }

    /// Rounds activation probabilities; exactly 0.5 counts as inactive.
    pub fn from_soft(soft: Vec<f64>) -> Self {
        let rho = soft.iter().map(|&p| p > 0.5).collect();
        Self { rho, soft: Some(soft) }
    }

    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        bits.iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::Input(format!("schedule entries must be 0 or 1, got {other}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self::new)
    }

    pub fn to_bits(&self) -> Vec<u8> {
        self.rho.iter().map(|&a| a as u8).collect()
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn active_count(&self) -> usize {
        self.rho.iter().filter(|&&a| a).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    /// bits/s
    pub total: f64,
    pub per_link: Vec<f64>,
}

/// Weighted Shannon rate of each link under a hard schedule.
pub fn sum_rate(ch: &ChannelMatrix, sched: &ScheduleVector) -> Result<RateReport> {
    if sched.len() != ch.num_links {
        return Err(Error::Shape(format!(
            "schedule has {} entries for {} links",
            sched.len(),
            ch.num_links
        )));
    }
    let mut per_link = vec![0.0; ch.num_links];
    let active: Vec<usize> = (0..ch.num_links).filter(|&l| sched.rho[l]).collect();
    for &l in &active {
        per_link[l] = link_rate(ch, &active, l);
    }
    let total = per_link.iter().sum();
    Ok(RateReport { total, per_link })
}

/// Total rate of the links listed (ascending) in `active`.
///
/// All exhaustive and greedy searches go through this function so that the
/// rates they compare are computed identically.
pub fn active_set_rate(ch: &ChannelMatrix, active: &[usize]) -> f64 {
    let mut total = 0.0;
    for &l in active {
        total += link_rate(ch, active, l);
    }
    total
}

#[inline]
fn link_rate(ch: &ChannelMatrix, active: &[usize], l: usize) -> f64 {
    let mut interference = 0.0;
    for &k in active {
        if k != l {
            interference += ch.tx_power * ch.gain(k, l);
        }
    }
    let signal = ch.tx_power * ch.direct(l);
    ch.weights[l] * ch.bandwidth * (1.0 + signal / (ch.noise_power + interference)).log2()
}

/// Sum rate with activation probabilities in place of the binary schedule.
pub fn soft_sum_rate(ch: &ChannelMatrix, probs: &[f64]) -> Result<f64> {
    check_probs(ch, probs)?;
    let n = ch.num_links;
    let mut total = 0.0;
    for l in 0..n {
        let (signal, denom) = soft_terms(ch, probs, l);
        total += ch.weights[l] * ch.bandwidth * (1.0 + signal / denom).log2();
    }
    Ok(total)
}

/// Soft sum rate together with its gradient with respect to `probs`.
pub fn soft_sum_rate_grad(ch: &ChannelMatrix, probs: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_probs(ch, probs)?;
    let n = ch.num_links;
    let scale = ch.bandwidth / LN_2;
    let mut total = 0.0;
    let mut grad = vec![0.0; n];
    // coupling[l] = d rate_l / d denom_l
    let mut coupling = vec![0.0; n];
    for l in 0..n {
        let (signal, denom) = soft_terms(ch, probs, l);
        total += ch.weights[l] * ch.bandwidth * (1.0 + signal / denom).log2();
        grad[l] += ch.weights[l] * scale * ch.tx_power * ch.direct(l) / (denom + signal);
        coupling[l] = -ch.weights[l] * scale * signal / (denom * (denom + signal));
    }
    for (k, g) in grad.iter_mut().enumerate() {
        for (l, c) in coupling.iter().enumerate() {
            if l != k {
                *g += c * ch.tx_power * ch.gain(k, l);
            }
        }
    }
    Ok((total, grad))
}

/// Signal power and noise-plus-interference of link `l` for soft activations.
#[inline]
fn soft_terms(ch: &ChannelMatrix, probs: &[f64], l: usize) -> (f64, f64) {
    let mut interference = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        if k != l {
            interference += p * (ch.tx_power * ch.gain(k, l));
        }
    }
    (probs[l] * (ch.tx_power * ch.direct(l)), ch.noise_power + interference)
}

fn check_probs(ch: &ChannelMatrix, probs: &[f64]) -> Result<()> {
    if probs.len() != ch.num_links {
        return Err(Error::Shape(format!(
            "{} probabilities for {} links",
            probs.len(),
            ch.num_links
        )));
    }
    Ok(())
}
