//! Graph view of a layout: one node per D2D pair, one directed edge per
//! interference link, both carrying one-hot quantized distances.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netgen::{LayoutConfig, NetworkLayout};

/// Uniform distance quantizer settings for node and edge features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizerSpec {
    pub bits: u32,
    pub node_range: (f64, f64),
    pub edge_range: (f64, f64),
}

impl QuantizerSpec {
    /// Node range `[d_min, d_max]`, edge range `[0, d_area]`.
    ///
    /// When every pair has the same length the node range collapses; it is
    /// widened to `[d, d + 1]` so that all nodes share the first interval.
    pub fn for_layout(cfg: &LayoutConfig, bits: u32) -> Self {
        let node_range = if cfg.d_max > cfg.d_min {
            (cfg.d_min, cfg.d_max)
        } else {
            (cfg.d_min, cfg.d_min + 1.0)
        };
        Self { bits, node_range, edge_range: (0.0, cfg.area) }
    }

    pub fn dim(&self) -> usize {
        1 << self.bits
    }

    pub fn validate(&self) -> Result<()> {
        if self.bits == 0 || self.bits > 16 {
            return Err(Error::Config(format!("quantization bits must be in 1..=16, got {}", self.bits)));
        }
        for (lo, hi) in [self.node_range, self.edge_range] {
            check_range(lo, hi)?;
        }
        Ok(())
    }
}

fn check_range(lo: f64, hi: f64) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(Error::Config(format!("quantizer range [{lo}, {hi}] is empty")));
    }
    Ok(())
}

/// Zero-based interval index of `d` among `2^bits` equal intervals of
/// `[lo, hi]`. Intervals are half-open except the last, and distances
/// outside the range fall into the nearest end interval.
pub fn quantize_index(d: f64, range: (f64, f64), bits: u32) -> Result<usize> {
    let (lo, hi) = range;
    check_range(lo, hi)?;
    if bits == 0 {
        return Err(Error::Config("quantization needs at least one bit".into()));
    }
    let levels = 1usize << bits;
    let width = (hi - lo) / levels as f64;
    let raw = ((d - lo) / width).floor();
    Ok(if raw.is_nan() || raw < 0.0 { 0 } else { (raw as usize).min(levels - 1) })
}

/// One-hot encoding of [`quantize_index`].
pub fn quantize(d: f64, range: (f64, f64), bits: u32) -> Result<Vec<f64>> {
    let idx = quantize_index(d, range, bits)?;
    let mut v = vec![0.0; 1 << bits];
    v[idx] = 1.0;
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Topology {
    FullyConnected,
    /// Each receiver hears only its `K` nearest foreign transmitters.
    Knn(usize),
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Topology::FullyConnected => f.write_str("full"),
            Topology::Knn(k) => write!(f, "knn:{k}"),
        }
    }
}

impl FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" | "fully-connected" => Ok(Topology::FullyConnected),
            _ => {
                let k = s
                    .strip_prefix("knn:")
                    .and_then(|k| k.parse::<usize>().ok())
                    .filter(|&k| k >= 1)
                    .ok_or_else(|| Error::Config(format!("topology must be `full` or `knn:K` with K >= 1, got {s:?}")))?;
                Ok(Topology::Knn(k))
            }
        }
    }
}

/// Directed interference graph with one-hot features stored as indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedGraph {
    pub num_nodes: usize,
    /// Feature dimension `2^q`.
    pub dim: usize,
    pub topology: Topology,
    /// Hot index of each node's feature.
    pub node_feat: Vec<usize>,
    /// Source nodes of the edges entering each node, ascending.
    pub in_neighbors: Vec<Vec<usize>>,
    /// Hot index of each in-edge's feature, parallel to `in_neighbors`.
    pub edge_feat: Vec<Vec<usize>>,
}

impl SchedGraph {
    pub fn node_feature(&self, v: usize) -> Vec<f64> {
        one_hot(self.dim, self.node_feat[v])
    }

    /// Feature of the `j`-th in-edge of node `v`.
    pub fn edge_feature(&self, v: usize, j: usize) -> Vec<f64> {
        one_hot(self.dim, self.edge_feat[v][j])
    }

    /// Sum of the one-hot features of every edge entering `v`.
    pub fn edge_histogram(&self, v: usize) -> Vec<f64> {
        let mut h = vec![0.0; self.dim];
        for &i in &self.edge_feat[v] {
            h[i] += 1.0;
        }
        h
    }

    pub fn num_edges(&self) -> usize {
        self.in_neighbors.iter().map(Vec::len).sum()
    }

    /// Relabels nodes so that new node `i` is old node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut inverse = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let mut in_neighbors = Vec::with_capacity(self.num_nodes);
        let mut edge_feat = Vec::with_capacity(self.num_nodes);
        for &old in perm {
            let mut edges: Vec<(usize, usize)> = self.in_neighbors[old]
                .iter()
                .zip(&self.edge_feat[old])
                .map(|(&u, &f)| (inverse[u], f))
                .collect();
            edges.sort_unstable();
            in_neighbors.push(edges.iter().map(|e| e.0).collect());
            edge_feat.push(edges.iter().map(|e| e.1).collect());
        }
        Self {
            num_nodes: self.num_nodes,
            dim: self.dim,
            topology: self.topology,
            node_feat: perm.iter().map(|&p| self.node_feat[p]).collect(),
            in_neighbors,
            edge_feat,
        }
    }

    /// Writes `src dst edge_bin` lines preceded by `node bin` lines.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# nodes={} dim={} topology={}", self.num_nodes, self.dim, self.topology)?;
        for (v, f) in self.node_feat.iter().enumerate() {
            writeln!(out, "node {v} {f}")?;
        }
        for v in 0..self.num_nodes {
            for (u, f) in self.in_neighbors[v].iter().zip(&self.edge_feat[v]) {
                writeln!(out, "edge {u} {v} {f}")?;
            }
        }
        Ok(())
    }
}

fn one_hot(dim: usize, idx: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[idx] = 1.0;
    v
}

/// Builds the interference graph of `layout`.
///
/// Edge `u -> v` stands for the interference from transmitter `u` at
/// receiver `v`. With [`Topology::Knn`] only the `K` transmitters closest to
/// each receiver are kept, ties going to the lower index.
pub fn build_graph(layout: &NetworkLayout, spec: &QuantizerSpec, topology: Topology) -> Result<SchedGraph> {
    spec.validate()?;
    let n = layout.num_pairs();
    let node_feat = (0..n)
        .map(|v| quantize_index(layout.pair_distance(v), spec.node_range, spec.bits))
        .collect::<Result<Vec<_>>>()?;
    let mut in_neighbors = Vec::with_capacity(n);
    let mut edge_feat = Vec::with_capacity(n);
    for v in 0..n {
        let mut sources: Vec<(f64, usize)> = (0..n)
            .filter(|&u| u != v)
            .map(|u| (layout.cross_distance(u, v), u))
            .collect();
        if let Topology::Knn(k) = topology {
            if k < sources.len() {
                let by_distance = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
                sources.select_nth_unstable_by(k - 1, by_distance);
                sources.truncate(k);
            }
        }
        sources.sort_unstable_by_key(|s| s.1);
        let feats = sources
            .iter()
            .map(|&(d, _)| quantize_index(d, spec.edge_range, spec.bits))
            .collect::<Result<Vec<_>>>()?;
        in_neighbors.push(sources.into_iter().map(|s| s.1).collect());
        edge_feat.push(feats);
    }
    Ok(SchedGraph { num_nodes: n, dim: spec.dim(), topology, node_feat, in_neighbors, edge_feat })
}
