//! Training objectives. Both return the loss of one layout together with its
//! gradient with respect to the classifier logits.

use super::tensor::Matrix;
use crate::error::{Error, Result};
use crate::netgen::{soft_sum_rate_grad, ChannelMatrix};

pub const LOG_CLAMP: f64 = 1e-12;
pub const RATE_FLOOR: f64 = 1e-30;

/// What a layout is trained against.
#[derive(Debug, Clone, Copy)]
pub enum LossTarget<'a> {
    Labels(&'a [bool]),
    Rate { channel: &'a ChannelMatrix, omega: f64 },
}

impl LossTarget<'_> {
    pub fn eval(&self, probs: &Matrix) -> Result<(f64, Matrix)> {
        match *self {
            LossTarget::Labels(labels) => supervised_loss(probs, labels),
            LossTarget::Rate { channel, omega } => unsupervised_loss(probs, channel, omega),
        }
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(LOG_CLAMP, 1.0 - LOG_CLAMP)
}

/// `-log(clamp(p))` and its derivative in `p` (zero where the clamp is active).
fn neg_log(p: f64) -> (f64, f64) {
    let c = clamp_prob(p);
    let d = if c == p { -1.0 / p } else { 0.0 };
    (-c.ln(), d)
}

/// Maps gradients w.r.t. the two softmax outputs to gradients w.r.t. logits.
fn softmax_backward(probs: &Matrix, d_probs: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(probs.rows, 2);
    for r in 0..probs.rows {
        let (p, g) = (probs.row(r), d_probs.row(r));
        let mean = p[0] * g[0] + p[1] * g[1];
        out.set(r, 0, p[0] * (g[0] - mean));
        out.set(r, 1, p[1] * (g[1] - mean));
    }
    out
}

fn check_rows(probs: &Matrix, n: usize) -> Result<()> {
    if probs.shape() != (n, 2) {
        return Err(Error::Shape(format!("{} x {} probabilities for {} links", probs.rows, probs.cols, n)));
    }
    Ok(())
}

/// Cross entropy summed over links.
pub fn supervised_loss(probs: &Matrix, labels: &[bool]) -> Result<(f64, Matrix)> {
    check_rows(probs, labels.len())?;
    let mut loss = 0.0;
    let mut d_probs = Matrix::zeros(probs.rows, 2);
    for (r, &y) in labels.iter().enumerate() {
        let c = usize::from(y);
        let (l, d) = neg_log(probs.get(r, c));
        loss += l;
        d_probs.set(r, c, d);
    }
    Ok((loss, softmax_backward(probs, &d_probs)))
}

/// Reciprocal soft sum rate plus a penalty on activation.
///
/// The rate is taken per unit bandwidth (bits/s/Hz) so the loss scale does
/// not depend on the configured bandwidth.
pub fn unsupervised_loss(probs: &Matrix, ch: &ChannelMatrix, omega: f64) -> Result<(f64, Matrix)> {
    check_rows(probs, ch.num_links)?;
    if !(omega >= 0.0) {
        return Err(Error::Config(format!("penalty weight must be non-negative, got {omega}")));
    }
    let active: Vec<f64> = (0..probs.rows).map(|r| probs.get(r, 1)).collect();
    let (rate, grad) = soft_sum_rate_grad(ch, &active)?;
    let rate = rate / ch.bandwidth;
    let mut d_probs = Matrix::zeros(probs.rows, 2);
    let mut loss = 1.0 / rate.max(RATE_FLOOR);
    if rate > RATE_FLOOR {
        let scale = -1.0 / (rate * rate * ch.bandwidth);
        for (r, g) in grad.iter().enumerate() {
            d_probs.set(r, 1, scale * g);
        }
    }
    if omega > 0.0 {
        for r in 0..probs.rows {
            let (l, d) = neg_log(probs.get(r, 0));
            loss += omega * l;
            d_probs.set(r, 0, omega * d);
        }
    }
    Ok((loss, softmax_backward(probs, &d_probs)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::brute_force_optimal;
    use crate::embednn::classifier::softmax_rows;
    use crate::netgen::{generate_layout, layout_channel, ChannelConfig, LayoutConfig};
    use rand::Rng;

    fn logits(n: usize, seed: u64) -> Matrix {
        let mut rng = crate::seed::rng_from(seed);
        Matrix::from_vec(n, 2, (0..2 * n).map(|_| rng.random_range(-2.0..2.0)).collect())
    }

    fn channel(n: usize, seed: u64) -> ChannelMatrix {
        let l = generate_layout(&LayoutConfig { num_pairs: n, seed, ..Default::default() }).unwrap();
        layout_channel(&l, &ChannelConfig::default()).unwrap()
    }

    /// Largest relative error between the analytic logit gradient and central differences.
    fn fd_error(z: &Matrix, f: impl Fn(&Matrix) -> (f64, Matrix)) -> f64 {
        let (_, analytic) = f(&softmax_rows(z));
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for i in 0..z.data.len() {
            let mut plus = z.clone();
            plus.data[i] += h;
            let mut minus = z.clone();
            minus.data[i] -= h;
            let num = (f(&softmax_rows(&plus)).0 - f(&softmax_rows(&minus)).0) / (2.0 * h);
            let a = analytic.data[i];
            worst = worst.max((a - num).abs() / a.abs().max(num.abs()).max(1e-8));
        }
        worst
    }

    #[test]
    fn cross_entropy_trivial_values() {
        let labels = [true, false, true];
        let exact = Matrix::from_vec(3, 2, vec![0.0, 1.0, 1.0, 0.0, 0.0, 1.0]);
        assert!(supervised_loss(&exact, &labels).unwrap().0 < 1e-11);
        let uniform = Matrix::from_vec(3, 2, vec![0.5; 6]);
        let (loss, _) = supervised_loss(&uniform, &labels).unwrap();
        assert!((loss - 3.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!(supervised_loss(&uniform, &labels[..2]).is_err());
    }

    #[test]
    fn cross_entropy_gradient_matches_differences() {
        for seed in 0..10 {
            let z = logits(7, seed);
            let labels: Vec<bool> = (0..7).map(|i| (i + seed as usize) % 3 == 0).collect();
            let err = fd_error(&z, |p| supervised_loss(p, &labels).unwrap());
            assert!(err < 1e-5, "seed {seed}: {err}");
        }
    }

    #[test]
    fn rate_loss_gradient_matches_differences() {
        for seed in 0..10 {
            let ch = channel(6, seed);
            let z = logits(6, seed + 50);
            for omega in [0.0, 0.01] {
                let err = fd_error(&z, |p| unsupervised_loss(p, &ch, omega).unwrap());
                assert!(err < 1e-5, "seed {seed} omega {omega}: {err}");
            }
        }
    }

    #[test]
    fn full_activation_costs_more_than_optimum() {
        // crowd five pairs so they interfere strongly
        let cfg = LayoutConfig { num_pairs: 5, area: 80.0, d_max: 30.0, seed: 4, ..Default::default() };
        let ch = layout_channel(&generate_layout(&cfg).unwrap(), &ChannelConfig::default()).unwrap();
        let best = brute_force_optimal(&ch).unwrap();
        let as_probs = |on: &[bool]| {
            Matrix::from_vec(5, 2, on.iter().flat_map(|&a| if a { [0.0, 1.0] } else { [1.0, 0.0] }).collect())
        };
        let full = unsupervised_loss(&as_probs(&[true; 5]), &ch, 0.0).unwrap().0;
        let opt = unsupervised_loss(&as_probs(&best.rho), &ch, 0.0).unwrap().0;
        assert!(best.active_count() < 5);
        assert!(full > opt, "full {full} vs optimum {opt}");
    }

    #[test]
    fn penalty_vanishes_when_everything_is_off() {
        let ch = channel(4, 1);
        let off = Matrix::from_vec(4, 2, [1.0, 0.0].repeat(4));
        let (with, _) = unsupervised_loss(&off, &ch, 0.02).unwrap();
        let (without, _) = unsupervised_loss(&off, &ch, 0.0).unwrap();
        assert_eq!(with, without);
        assert_eq!(without, 1.0 / RATE_FLOOR);
        assert!(unsupervised_loss(&off, &ch, -1.0).is_err());
    }
}
