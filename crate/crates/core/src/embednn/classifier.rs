//! Per-node classifier: affine -> batch norm -> ReLU -> affine -> softmax.

use super::params::{ClassifierParams, BN_EPS, BN_MOMENTUM};
use super::tensor::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics over every node in the batch.
    Train,
    /// Running statistics.
    Eval,
}

#[derive(Debug, Clone)]
pub struct ClassifierCache {
    pub mode: Mode,
    pub input: Matrix,
    pub xhat: Matrix,
    pub inv_std: Vec<f64>,
    /// Post-ReLU activations.
    pub act: Matrix,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
    pub logits: Matrix,
    /// Row `i` is `(P(inactive), P(active))` for node `i`.
    pub probs: Matrix,
}

pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            total += *x;
        }
        row.iter_mut().for_each(|x| *x /= total);
    }
    out
}

pub fn classify_forward(input: &Matrix, params: &ClassifierParams, mode: Mode) -> Result<ClassifierCache> {
    let h = params.hidden.rows;
    if input.cols != params.hidden.cols {
        return Err(Error::Shape(format!(
            "embeddings have dimension {} but the classifier expects {}",
            input.cols, params.hidden.cols
        )));
    }
    let n = input.rows;
    let z = input.matmul_bt(&params.hidden);
    let (mean, var) = match mode {
        Mode::Train => {
            let mut mean = vec![0.0; h];
            let mut var = vec![0.0; h];
            if n > 0 {
                for r in 0..n {
                    for (m, &x) in mean.iter_mut().zip(z.row(r)) {
                        *m += x;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n as f64);
                for r in 0..n {
                    for ((v, &x), &m) in var.iter_mut().zip(z.row(r)).zip(&mean) {
                        *v += (x - m) * (x - m);
                    }
                }
                var.iter_mut().for_each(|v| *v /= n as f64);
            }
            (mean, var)
        }
        Mode::Eval => (params.running_mean.clone(), params.running_var.clone()),
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut xhat = Matrix::zeros(n, h);
    let mut act = Matrix::zeros(n, h);
    for r in 0..n {
        for j in 0..h {
            let xh = (z.get(r, j) - mean[j]) * inv_std[j];
            xhat.set(r, j, xh);
            act.set(r, j, (params.gamma[j] * xh + params.beta[j]).max(0.0));
        }
    }
    let mut logits = act.matmul_bt(&params.out);
    for r in 0..n {
        for (l, b) in logits.row_mut(r).iter_mut().zip(&params.out_bias) {
            *l += b;
        }
    }
    let probs = softmax_rows(&logits);
    Ok(ClassifierCache {
        mode,
        input: input.clone(),
        xhat,
        inv_std,
        act,
        batch_mean: mean,
        batch_var: var,
        logits,
        probs,
    })
}

/// Folds the batch statistics of a training pass into the running estimates
/// (exponential average; the variance estimate is unbiased).
pub fn update_running_stats(params: &mut ClassifierParams, cache: &ClassifierCache) {
    let n = cache.input.rows;
    if cache.mode != Mode::Train || n == 0 {
        return;
    }
    let correction = if n > 1 { n as f64 / (n - 1) as f64 } else { 1.0 };
    for j in 0..params.running_mean.len() {
        params.running_mean[j] = (1.0 - BN_MOMENTUM) * params.running_mean[j] + BN_MOMENTUM * cache.batch_mean[j];
        params.running_var[j] =
            (1.0 - BN_MOMENTUM) * params.running_var[j] + BN_MOMENTUM * cache.batch_var[j] * correction;
    }
}

/// Gradients of the classifier tensors plus the gradient w.r.t. its input.
#[derive(Debug, Clone)]
pub struct ClassifierGrads {
    pub hidden: Matrix,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub out: Matrix,
    pub out_bias: Vec<f64>,
    pub input: Matrix,
}

pub fn classify_backward(params: &ClassifierParams, cache: &ClassifierCache, d_logits: &Matrix) -> Result<ClassifierGrads> {
    let n = cache.input.rows;
    let h = params.hidden.rows;
    if d_logits.shape() != (n, 2) || cache.act.shape() != (n, h) {
        return Err(Error::State("classifier cache does not match the upstream gradient".into()));
    }
    let mut out = Matrix::zeros(2, h);
    out.add_matmul_at(d_logits, &cache.act);
    let mut out_bias = vec![0.0; 2];
    for r in 0..n {
        out_bias[0] += d_logits.get(r, 0);
        out_bias[1] += d_logits.get(r, 1);
    }
    let mut d_act = d_logits.matmul(&params.out);
    // through ReLU and the batch-norm affine part
    let mut gamma = vec![0.0; h];
    let mut beta = vec![0.0; h];
    for r in 0..n {
        for j in 0..h {
            let g = if cache.act.get(r, j) > 0.0 { d_act.get(r, j) } else { 0.0 };
            gamma[j] += g * cache.xhat.get(r, j);
            beta[j] += g;
            d_act.set(r, j, g * params.gamma[j]);
        }
    }
    let d_xhat = d_act;
    let mut d_z = Matrix::zeros(n, h);
    match cache.mode {
        Mode::Eval => {
            for r in 0..n {
                for j in 0..h {
                    d_z.set(r, j, d_xhat.get(r, j) * cache.inv_std[j]);
                }
            }
        }
        Mode::Train => {
            let mut sum_d = vec![0.0; h];
            let mut sum_dx = vec![0.0; h];
            for r in 0..n {
                for j in 0..h {
                    sum_d[j] += d_xhat.get(r, j);
                    sum_dx[j] += d_xhat.get(r, j) * cache.xhat.get(r, j);
                }
            }
            let nf = n as f64;
            for r in 0..n {
                for j in 0..h {
                    let v = cache.inv_std[j] / nf * (nf * d_xhat.get(r, j) - sum_d[j] - cache.xhat.get(r, j) * sum_dx[j]);
                    d_z.set(r, j, v);
                }
            }
        }
    }
    let mut hidden = Matrix::zeros(h, cache.input.cols);
    hidden.add_matmul_at(&d_z, &cache.input);
    let input = d_z.matmul(&params.hidden);
    Ok(ClassifierGrads { hidden, gamma, beta, out, out_bias, input })
}
