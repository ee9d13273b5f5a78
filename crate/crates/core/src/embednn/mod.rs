//! Graph-embedding scheduler: mean-field embedding, per-node classifier,
//! losses and the optimizer, all on a small internal dense-matrix type.

pub mod adam;
pub mod checkpoint;
pub mod classifier;
pub mod embed;
pub mod loss;
pub mod params;
pub mod tensor;

use rayon::prelude::*;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointHeader};
pub use classifier::{classify_backward, classify_forward, update_running_stats, ClassifierCache, Mode};
pub use embed::{embed_backward, embed_forward, EmbedCache, EmbedGrads};
pub use loss::{supervised_loss, unsupervised_loss, LossTarget};
pub use params::{Architecture, ClassifierParams, EmbeddingParams, Gradients, ModelParams};
pub use tensor::Matrix;

use crate::error::{Error, Result};
use crate::graph::SchedGraph;
use crate::netgen::ScheduleVector;

/// Forward pass over a mini-batch of graphs whose nodes share one
/// batch-norm pool.
#[derive(Debug, Clone)]
pub struct BatchForward {
    pub embeds: Vec<EmbedCache>,
    /// Row offset of each graph in the stacked node matrices.
    pub offsets: Vec<usize>,
    pub clf: ClassifierCache,
}

impl BatchForward {
    pub fn num_graphs(&self) -> usize {
        self.embeds.len()
    }

    fn rows(&self, i: usize) -> (usize, usize) {
        (self.offsets[i], self.offsets[i] + self.embeds[i].output.rows)
    }

    /// Probability rows of graph `i`.
    pub fn probs(&self, i: usize) -> Matrix {
        let (a, b) = self.rows(i);
        self.clf.probs.rows_slice(a, b)
    }
}

/// Fails unless `graph` was built the way the model expects.
pub fn check_compatible(arch: &Architecture, graph: &SchedGraph) -> Result<()> {
    if graph.dim != arch.feature_dim() {
        return Err(Error::Compatibility(format!(
            "model uses q = {} ({} bins) but the graph has {} bins",
            arch.bits,
            arch.feature_dim(),
            graph.dim
        )));
    }
    if graph.topology != arch.topology {
        return Err(Error::Compatibility(format!(
            "model was trained on {} graphs, got {}",
            arch.topology, graph.topology
        )));
    }
    Ok(())
}

pub fn forward_batch(model: &ModelParams, graphs: &[&SchedGraph], mode: Mode) -> Result<BatchForward> {
    let embeds = graphs
        .par_iter()
        .map(|g| embed_forward(g, &model.embed))
        .collect::<Result<Vec<_>>>()?;
    let mut offsets = Vec::with_capacity(embeds.len());
    let mut total = 0;
    for e in &embeds {
        offsets.push(total);
        total += e.output.rows;
    }
    let stacked = Matrix::vstack(&embeds.iter().map(|e| &e.output).collect::<Vec<_>>());
    let stacked = if stacked.cols == 0 { Matrix::zeros(0, model.arch.embed_dim) } else { stacked };
    let clf = classify_forward(&stacked, &model.clf, mode)?;
    Ok(BatchForward { embeds, offsets, clf })
}

/// Accumulates parameter gradients given the stacked logit gradient.
///
/// Per-graph embedding gradients are computed in parallel and summed in
/// graph order, so results do not depend on the thread count.
pub fn backward_batch(model: &mut ModelParams, graphs: &[&SchedGraph], fwd: &BatchForward, d_logits: &Matrix) -> Result<()> {
    if graphs.len() != fwd.num_graphs() {
        return Err(Error::State("forward cache belongs to a different batch".into()));
    }
    let cg = classify_backward(&model.clf, &fwd.clf, d_logits)?;
    let embed = &model.embed;
    let per_graph = (0..graphs.len())
        .into_par_iter()
        .map(|i| {
            let (a, b) = fwd.rows(i);
            embed_backward(graphs[i], embed, &fwd.embeds[i], &cg.input.rows_slice(a, b))
        })
        .collect::<Result<Vec<_>>>()?;
    let g = &mut model.grad;
    for eg in &per_graph {
        g.w1.add_assign(&eg.w1);
        g.w2.add_assign(&eg.w2);
        g.w3.add_assign(&eg.w3);
    }
    g.hidden.add_assign(&cg.hidden);
    g.out.add_assign(&cg.out);
    for (dst, src) in [(&mut g.gamma, &cg.gamma), (&mut g.beta, &cg.beta), (&mut g.out_bias, &cg.out_bias)] {
        for (d, s) in dst.iter_mut().zip(src) {
            *d += s;
        }
    }
    Ok(())
}

/// Sets the batch-norm running statistics to the population estimate over
/// `batches` under the current weights: the mean of the batch means and the
/// mean of the unbiased batch variances.
pub fn refresh_running_stats(model: &mut ModelParams, batches: &[Vec<&SchedGraph>]) -> Result<()> {
    let h = model.arch.hidden;
    let stats = batches
        .par_iter()
        .map(|b| {
            let fwd = forward_batch(model, b, Mode::Train)?;
            let n = fwd.clf.input.rows;
            let correction = if n > 1 { n as f64 / (n - 1) as f64 } else { 1.0 };
            let var: Vec<f64> = fwd.clf.batch_var.iter().map(|v| v * correction).collect();
            Ok((n > 0).then_some((fwd.clf.batch_mean, var)))
        })
        .collect::<Result<Vec<_>>>()?;
    let stats: Vec<_> = stats.into_iter().flatten().collect();
    if stats.is_empty() {
        return Ok(());
    }
    let k = stats.len() as f64;
    let (mut mean, mut var) = (vec![0.0; h], vec![0.0; h]);
    for (m, v) in &stats {
        for j in 0..h {
            mean[j] += m[j] / k;
            var[j] += v[j] / k;
        }
    }
    model.clf.running_mean = mean;
    model.clf.running_var = var;
    Ok(())
}

/// Eval-mode activation probabilities, rows `(P(inactive), P(active))`.
pub fn predict(model: &ModelParams, graph: &SchedGraph) -> Result<Matrix> {
    let embeds = embed_forward(graph, &model.embed)?;
    Ok(classify_forward(&embeds.output, &model.clf, Mode::Eval)?.probs)
}

/// Hard schedule: link `l` is active iff `P(active) > 0.5`.
pub fn schedule(model: &ModelParams, graph: &SchedGraph) -> Result<ScheduleVector> {
    let probs = predict(model, graph)?;
    Ok(ScheduleVector::from_soft((0..probs.rows).map(|r| probs.get(r, 1)).collect()))
}
