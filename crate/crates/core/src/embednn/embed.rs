//! Embedded mean-field iterations over the interference graph.
//!
//! Starting from zero embeddings, every node is updated synchronously
//! `T` times with
//!
//! ```text
//! mu_v <- relu(W1 x_v + W2 sum_{u in N(v)} alpha(u, v) + W3 sum_{u in N(v)} mu_u)
//! ```

use super::params::EmbeddingParams;
use super::tensor::Matrix;
use crate::error::{Error, Result};
use crate::graph::SchedGraph;

/// Intermediates of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct EmbedCache {
    /// `W1 x_v + W2 hist_v`, constant across iterations (`L x p`).
    pub base: Matrix,
    /// In-edge feature histograms (`L x 2^q`).
    pub hist: Matrix,
    /// Neighbour sums feeding iteration `t + 1`, for `t = 0..T`.
    pub neighbor_sums: Vec<Matrix>,
    /// Pre-activations of iterations `1..=T`.
    pub pre: Vec<Matrix>,
    /// Final embeddings (`L x p`).
    pub output: Matrix,
}

fn check_dims(graph: &SchedGraph, params: &EmbeddingParams) -> Result<()> {
    if graph.dim != params.feature_dim() || params.w2.cols != graph.dim {
        return Err(Error::Shape(format!(
            "graph features have dimension {} but the embedding expects {}",
            graph.dim,
            params.feature_dim()
        )));
    }
    if params.w3.shape() != (params.embed_dim(), params.embed_dim()) || params.iterations == 0 {
        return Err(Error::Shape("embedding weights are inconsistent".into()));
    }
    Ok(())
}

fn edge_histograms(graph: &SchedGraph) -> Matrix {
    let mut hist = Matrix::zeros(graph.num_nodes, graph.dim);
    for v in 0..graph.num_nodes {
        let row = hist.row_mut(v);
        for &f in &graph.edge_feat[v] {
            row[f] += 1.0;
        }
    }
    hist
}

/// Sums the rows of `mu` over each node's in-neighbours.
fn neighbor_sums(graph: &SchedGraph, mu: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(mu.rows, mu.cols);
    for v in 0..graph.num_nodes {
        let dst = out.row_mut(v);
        for &u in &graph.in_neighbors[v] {
            for (d, &m) in dst.iter_mut().zip(mu.row(u)) {
                *d += m;
            }
        }
    }
    out
}

pub fn embed_forward(graph: &SchedGraph, params: &EmbeddingParams) -> Result<EmbedCache> {
    check_dims(graph, params)?;
    let (n, p) = (graph.num_nodes, params.embed_dim());
    let hist = edge_histograms(graph);
    let mut base = hist.matmul_bt(&params.w2);
    for v in 0..n {
        let x = graph.node_feat[v];
        for (i, b) in base.row_mut(v).iter_mut().enumerate() {
            *b += params.w1.get(i, x);
        }
    }
    let mut mu = Matrix::zeros(n, p);
    let mut sums = Vec::with_capacity(params.iterations);
    let mut pre = Vec::with_capacity(params.iterations);
    for t in 0..params.iterations {
        let s = if t == 0 { Matrix::zeros(n, p) } else { neighbor_sums(graph, &mu) };
        let mut a = s.matmul_bt(&params.w3);
        a.add_assign(&base);
        mu = a.clone();
        mu.data.iter_mut().for_each(|x| *x = x.max(0.0));
        sums.push(s);
        pre.push(a);
    }
    Ok(EmbedCache { base, hist, neighbor_sums: sums, pre, output: mu })
}

/// Embedding-weight gradients of one graph.
#[derive(Debug, Clone)]
pub struct EmbedGrads {
    pub w1: Matrix,
    pub w2: Matrix,
    pub w3: Matrix,
}

/// Reverse pass through the `T` iterations given `d_out = dLoss/dmu^(T)`.
pub fn embed_backward(graph: &SchedGraph, params: &EmbeddingParams, cache: &EmbedCache, d_out: &Matrix) -> Result<EmbedGrads> {
    check_dims(graph, params)?;
    let (n, p) = (graph.num_nodes, params.embed_dim());
    if d_out.shape() != (n, p) || cache.pre.len() != params.iterations || cache.base.shape() != (n, p) {
        return Err(Error::State("embedding cache does not match this graph and parameters".into()));
    }
    let mut grads = EmbedGrads {
        w1: Matrix::zeros(p, params.feature_dim()),
        w2: Matrix::zeros(p, params.feature_dim()),
        w3: Matrix::zeros(p, p),
    };
    // Gradient w.r.t. the base term accumulates over all iterations.
    let mut d_base = Matrix::zeros(n, p);
    let mut upstream = d_out.clone();
    for t in (0..params.iterations).rev() {
        let mut d_pre = upstream;
        for (g, &a) in d_pre.data.iter_mut().zip(&cache.pre[t].data) {
            if a <= 0.0 {
                *g = 0.0;
            }
        }
        d_base.add_assign(&d_pre);
        if t == 0 {
            break;
        }
        grads.w3.add_matmul_at(&d_pre, &cache.neighbor_sums[t]);
        let d_sum = d_pre.matmul(&params.w3);
        let mut d_mu = Matrix::zeros(n, p);
        for v in 0..n {
            let src = d_sum.row(v);
            for &u in &graph.in_neighbors[v] {
                for (d, &s) in d_mu.row_mut(u).iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        upstream = d_mu;
    }
    grads.w2.add_matmul_at(&d_base, &cache.hist);
    for v in 0..n {
        let x = graph.node_feat[v];
        for (i, &g) in d_base.row(v).iter().enumerate() {
            grads.w1.data[i * params.feature_dim() + x] += g;
        }
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embednn::params::{Architecture, ModelParams};
    use crate::graph::{build_graph, QuantizerSpec, Topology};
    use crate::netgen::{generate_layout, LayoutConfig};

    fn graph(n: usize, seed: u64, bits: u32) -> SchedGraph {
        let l = generate_layout(&LayoutConfig { num_pairs: n, seed, ..Default::default() }).unwrap();
        build_graph(&l, &QuantizerSpec::for_layout(&l.config, bits), Topology::FullyConnected).unwrap()
    }

    fn params(p: usize, bits: u32, t: usize, seed: u64) -> EmbeddingParams {
        let arch = Architecture { embed_dim: p, bits, iterations: t, hidden: 3, topology: Topology::FullyConnected };
        let mut m = ModelParams::init(arch, seed).unwrap();
        m.randomize_w3(seed + 1);
        m.embed
    }

    /// Direct evaluation of the update rule with dense one-hot vectors.
    fn reference_embedding(g: &SchedGraph, w: &EmbeddingParams) -> Vec<Vec<f64>> {
        let p = w.embed_dim();
        let mut mu = vec![vec![0.0; p]; g.num_nodes];
        for _ in 0..w.iterations {
            let mut next = vec![vec![0.0; p]; g.num_nodes];
            for v in 0..g.num_nodes {
                let x = g.node_feature(v);
                let mut alpha = vec![0.0; g.dim];
                let mut nb = vec![0.0; p];
                for (j, &u) in g.in_neighbors[v].iter().enumerate() {
                    for (a, e) in alpha.iter_mut().zip(g.edge_feature(v, j)) {
                        *a += e;
                    }
                    for (s, m) in nb.iter_mut().zip(&mu[u]) {
                        *s += m;
                    }
                }
                for i in 0..p {
                    let mut acc = 0.0;
                    for j in 0..g.dim {
                        acc += w.w1.get(i, j) * x[j] + w.w2.get(i, j) * alpha[j];
                    }
                    for k in 0..p {
                        acc += w.w3.get(i, k) * nb[k];
                    }
                    next[v][i] = acc.max(0.0);
                }
            }
            mu = next;
        }
        mu
    }

    #[test]
    fn zero_weights_give_zero_embeddings() {
        let g = graph(6, 1, 3);
        let mut w = params(5, 3, 2, 0);
        w.w1.fill(0.0);
        w.w2.fill(0.0);
        w.w3.fill(0.0);
        let out = embed_forward(&g, &w).unwrap().output;
        assert!(out.data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_iteration_ignores_w3() {
        let g = graph(6, 2, 3);
        let w = params(5, 3, 1, 1);
        let mut w_other = w.clone();
        w_other.w3 = params(5, 3, 1, 99).w3;
        assert_eq!(embed_forward(&g, &w).unwrap().output, embed_forward(&g, &w_other).unwrap().output);
    }

    #[test]
    fn matches_reference_update() {
        for seed in 0..5 {
            let g = graph(4, seed, 2);
            let w = params(6, 2, 2, seed + 10);
            let got = embed_forward(&g, &w).unwrap().output;
            let want = reference_embedding(&g, &w);
            for v in 0..4 {
                for i in 0..6 {
                    assert!((got.get(v, i) - want[v][i]).abs() <= 1e-12 * want[v][i].abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn w3_gradient_vanishes_for_one_iteration() {
        let g = graph(5, 3, 2);
        let w = params(4, 2, 1, 3);
        let cache = embed_forward(&g, &w).unwrap();
        let d = Matrix::from_vec(5, 4, (0..20).map(|i| (i as f64 * 0.37).sin()).collect());
        let grads = embed_backward(&g, &w, &cache, &d).unwrap();
        assert!(grads.w3.data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let g = graph(4, 1, 3);
        let w = params(4, 2, 2, 0);
        assert!(matches!(embed_forward(&g, &w), Err(Error::Shape(_))));
    }
}
