use serde::{Deserialize, Serialize};

use super::tensor::Matrix;
use crate::error::{Error, Result};
use crate::graph::Topology;
use crate::seed::rng_from;

/// Model shape hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    /// Embedding dimension `p`.
    pub embed_dim: usize,
    /// Mean-field iterations `T`.
    pub iterations: usize,
    /// Quantization bits `q`; features have dimension `2^q`.
    pub bits: u32,
    /// Classifier hidden width `H`.
    pub hidden: usize,
    pub topology: Topology,
}

impl Default for Architecture {
    fn default() -> Self {
        Self { embed_dim: 32, iterations: 2, bits: 3, hidden: 64, topology: Topology::FullyConnected }
    }
}

impl Architecture {
    pub fn feature_dim(&self) -> usize {
        1 << self.bits
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.iterations == 0 || self.hidden == 0 {
            return Err(Error::Config("embedding dim, iterations and hidden size must be positive".into()));
        }
        if self.bits == 0 || self.bits > 16 {
            return Err(Error::Config(format!("quantization bits must be in 1..=16, got {}", self.bits)));
        }
        Ok(())
    }
}

/// `W1` maps node features, `W2` aggregated edge features, `W3` the sum of
/// neighbour embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingParams {
    pub w1: Matrix,
    pub w2: Matrix,
    pub w3: Matrix,
    pub iterations: usize,
}

impl EmbeddingParams {
    pub fn embed_dim(&self) -> usize {
        self.w1.rows
    }

    pub fn feature_dim(&self) -> usize {
        self.w1.cols
    }
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Hidden affine layer (bias-free; batch norm supplies the shift),
/// batch normalization, ReLU, then a two-way affine output.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    /// `H x p`
    pub hidden: Matrix,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    /// `2 x H`
    pub out: Matrix,
    pub out_bias: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

/// Gradient buffer mirroring every learnable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Matrix,
    pub w2: Matrix,
    pub w3: Matrix,
    pub hidden: Matrix,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub out: Matrix,
    pub out_bias: Vec<f64>,
}

impl Gradients {
    pub fn zeros(arch: &Architecture) -> Self {
        let (p, f, h) = (arch.embed_dim, arch.feature_dim(), arch.hidden);
        Self {
            w1: Matrix::zeros(p, f),
            w2: Matrix::zeros(p, f),
            w3: Matrix::zeros(p, p),
            hidden: Matrix::zeros(h, p),
            gamma: vec![0.0; h],
            beta: vec![0.0; h],
            out: Matrix::zeros(2, h),
            out_bias: vec![0.0; 2],
        }
    }

    pub fn slices(&self) -> [&[f64]; 8] {
        [
            &self.w1.data,
            &self.w2.data,
            &self.w3.data,
            &self.hidden.data,
            &self.gamma,
            &self.beta,
            &self.out.data,
            &self.out_bias,
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 8] {
        [
            &mut self.w1.data,
            &mut self.w2.data,
            &mut self.w3.data,
            &mut self.hidden.data,
            &mut self.gamma,
            &mut self.beta,
            &mut self.out.data,
            &mut self.out_bias,
        ]
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }
}

/// Names of the eight learnable tensors, in slot order.
pub const PARAM_NAMES: [&str; 8] = ["w1", "w2", "w3", "hidden", "bn_gamma", "bn_beta", "out", "out_bias"];

/// Every parameter of the model plus its gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: Architecture,
    pub embed: EmbeddingParams,
    pub clf: ClassifierParams,
    pub grad: Gradients,
}

fn glorot(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

impl ModelParams {
    /// Glorot-uniform weights except `W3 = 0`, unit batch-norm scale, zero
    /// shifts and biases.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = rng_from(seed);
        let (p, f, h) = (arch.embed_dim, arch.feature_dim(), arch.hidden);
        let embed = EmbeddingParams {
            w1: Matrix::uniform(p, f, glorot(f, p), &mut rng),
            w2: Matrix::uniform(p, f, glorot(f, p), &mut rng),
            // Neighbour sums grow with the degree and compound over
            // iterations; starting W3 at zero starts from the neighbour-free
            // model and lets training decide how much to mix in.
            w3: Matrix::zeros(p, p),
            iterations: arch.iterations,
        };
        let clf = ClassifierParams {
            hidden: Matrix::uniform(h, p, glorot(p, h), &mut rng),
            gamma: vec![1.0; h],
            beta: vec![0.0; h],
            out: Matrix::uniform(2, h, glorot(h, 2), &mut rng),
            out_bias: vec![0.0; 2],
            running_mean: vec![0.0; h],
            running_var: vec![1.0; h],
        };
        Ok(Self { arch, embed, clf, grad: Gradients::zeros(&arch) })
    }

    /// Overwrites `W3` with Glorot-uniform values.
    pub fn randomize_w3(&mut self, seed: u64) {
        let p = self.arch.embed_dim;
        self.embed.w3 = Matrix::uniform(p, p, glorot(p, p), &mut rng_from(seed));
    }

    pub fn zero_grad(&mut self) {
        for s in self.grad.slices_mut() {
            s.fill(0.0);
        }
    }

    pub fn slices(&self) -> [&[f64]; 8] {
        [
            &self.embed.w1.data,
            &self.embed.w2.data,
            &self.embed.w3.data,
            &self.clf.hidden.data,
            &self.clf.gamma,
            &self.clf.beta,
            &self.clf.out.data,
            &self.clf.out_bias,
        ]
    }

    /// Learnable tensors paired with their gradients, in slot order.
    pub fn param_grad_pairs(&mut self) -> [(&mut [f64], &[f64]); 8] {
        let g = &self.grad;
        [
            (&mut self.embed.w1.data[..], &g.w1.data[..]),
            (&mut self.embed.w2.data[..], &g.w2.data[..]),
            (&mut self.embed.w3.data[..], &g.w3.data[..]),
            (&mut self.clf.hidden.data[..], &g.hidden.data[..]),
            (&mut self.clf.gamma[..], &g.gamma[..]),
            (&mut self.clf.beta[..], &g.beta[..]),
            (&mut self.clf.out.data[..], &g.out.data[..]),
            (&mut self.clf.out_bias[..], &g.out_bias[..]),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }

    /// Overwrites the learnable tensors from a flat vector in slot order.
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!("{} values for {} parameters", flat.len(), self.num_params())));
        }
        let mut offset = 0;
        for (param, _) in self.param_grad_pairs() {
            let n = param.len();
            param.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|x| x.is_finite()))
    }

    /// Checks tensor shapes against the architecture.
    pub fn check_shapes(&self) -> Result<()> {
        let a = &self.arch;
        let (p, f, h) = (a.embed_dim, a.feature_dim(), a.hidden);
        let ok = self.embed.w1.shape() == (p, f)
            && self.embed.w2.shape() == (p, f)
            && self.embed.w3.shape() == (p, p)
            && self.embed.iterations == a.iterations
            && self.clf.hidden.shape() == (h, p)
            && self.clf.gamma.len() == h
            && self.clf.beta.len() == h
            && self.clf.out.shape() == (2, h)
            && self.clf.out_bias.len() == 2
            && self.clf.running_mean.len() == h
            && self.clf.running_var.len() == h
            && self.clf.running_var.iter().all(|&v| v > 0.0);
        let reference = Gradients::zeros(a);
        let grad_ok = self.grad.w1.shape() == reference.w1.shape()
            && self.grad.w2.shape() == reference.w2.shape()
            && self.grad.w3.shape() == reference.w3.shape()
            && self.grad.hidden.shape() == reference.hidden.shape()
            && self.grad.out.shape() == reference.out.shape()
            && self.grad.slices().iter().zip(reference.slices()).all(|(g, r)| g.len() == r.len());
        if ok && grad_ok {
            Ok(())
        } else {
            Err(Error::Shape(format!("parameters do not match architecture {a:?}")))
        }
    }
}
