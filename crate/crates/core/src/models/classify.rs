use log::{debug, info};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{
    adam_step, build_dense_stack, build_mp_stack, mp_stack_forward, resolve_pairs, stratified_holdout, AdamState,
    MpConfig, MpLayer, ParamSet, TrainConfig,
};
use crate::autodiff::{gemm, Axis, NodeId, Tape, Tensor};
use crate::error::{Error, Result};
use crate::graph::{Graph, GraphCollection};
use crate::layers::{dense, mlp_assign, Activation, MlpParams};
use crate::losses::{aux_loss, cross_entropy_loss, LossReport};
use crate::rng::{prng_stream, streams};
use crate::sparse::CsrMatrix;

/// Global readout over the vertices of the last graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolKind {
    Mean,
    Sum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierArch {
    /// Message passing before each pooling block.
    pub mp: MpConfig,
    /// Message passing after the last pooling block.
    pub post_mp: MpConfig,
    pub pool_hidden: Vec<usize>,
    pub pool_activation: Activation,
    /// Clusters of the first pooling block; `None` means half the mean
    /// vertex count, rounded up. Later blocks halve it again.
    pub k_pool: Option<usize>,
    pub blocks: usize,
    pub readout: PoolKind,
}

impl Default for ClassifierArch {
    /// One 32-wide ELU GTVConv layer with δ = 1.644 on each side of a single
    /// pooling block whose assignment MLP has three 64-wide ReLU layers.
    fn default() -> Self {
        let mp = MpConfig::gtvconv(vec![32], Activation::Elu, 1.644);
        Self {
            mp: mp.clone(),
            post_mp: mp,
            pool_hidden: vec![64, 64, 64],
            pool_activation: Activation::Relu,
            k_pool: None,
            blocks: 1,
            readout: PoolKind::Mean,
        }
    }
}

/// Message passing followed by a pooling assignment MLP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolBlock {
    pub mp_layers: Vec<MpLayer>,
    pub mlp: MlpParams,
    pub mlp_layers: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub blocks: Vec<PoolBlock>,
    pub post_layers: Vec<MpLayer>,
    pub readout: PoolKind,
    /// `(weight, bias)` of the dense head.
    pub head: (usize, usize),
    pub classes: usize,
    pub params: ParamSet,
}

impl ClassifierModel {
    pub fn new(f_in: usize, classes: usize, k_pool: usize, arch: &ClassifierArch, seed: u64) -> Result<Self> {
        arch.mp.validate()?;
        arch.post_mp.validate()?;
        if classes < 2 || k_pool == 0 || f_in == 0 {
            return Err(Error::InvalidConfig(format!(
                "need ≥ 2 classes, k_pool ≥ 1 and features; got {classes}, {k_pool}, {f_in}"
            )));
        }
        let mut rng = prng_stream(seed, streams::INIT);
        let mut params = ParamSet::new();
        let mut width = f_in;
        let mut k = k_pool;
        let mut blocks = Vec::with_capacity(arch.blocks);
        for b in 0..arch.blocks {
            let (mp_layers, w) = build_mp_stack(&arch.mp, width, &format!("block{b}.mp"), &mut params, &mut rng);
            let mlp = MlpParams {
                hidden: arch.pool_hidden.clone(),
                activation: arch.pool_activation,
                k,
            };
            let mlp_layers = build_dense_stack(&mlp.layer_dims(w), &format!("block{b}.pool"), &mut params, &mut rng);
            blocks.push(PoolBlock {
                mp_layers,
                mlp,
                mlp_layers,
            });
            width = w;
            k = k.div_ceil(2);
        }
        let (post_layers, w) = build_mp_stack(&arch.post_mp, width, "post.mp", &mut params, &mut rng);
        let head = build_dense_stack(&[(w, classes)], "head", &mut params, &mut rng)[0];
        Ok(Self {
            blocks,
            post_layers,
            readout: arch.readout,
            head,
            classes,
            params,
        })
    }

    fn input_width(&self) -> usize {
        let first = self
            .blocks
            .first()
            .and_then(|b| b.mp_layers.first())
            .or(self.post_layers.first())
            .map(|l| l.weight);
        match first {
            Some(w) => self.params.get(w).value.rows(),
            None => self.params.get(self.head.0).value.rows(),
        }
    }
}

/// `D^{-1/2} A D^{-1/2}` leaving rows of isolated vertices at zero.
fn coarsening_adjacency(g: &Graph) -> CsrMatrix {
    let deg = g.degrees();
    g.adjacency().map_values(|r, c, v| v / (deg[r] * deg[c]).sqrt())
}

/// Coarsen with assignment `s`: returns `SᵀÃS` (diagonal kept, symmetrized)
/// and the differentiable pooled features `SᵀX`.
pub fn pool(tape: &mut Tape, a_tilde: &CsrMatrix, x: NodeId, s: NodeId) -> Result<(Tensor, NodeId)> {
    let (n, k) = tape.value(s).require_matrix("pool assignment")?;
    let (xn, _) = tape.value(x).require_matrix("pool features")?;
    if a_tilde.rows() != n || a_tilde.cols() != n || xn != n {
        return Err(Error::DimensionMismatch(format!(
            "pooling {}x{} adjacency, {xn} feature rows, {n} assignment rows",
            a_tilde.rows(),
            a_tilde.cols()
        )));
    }
    let sv = tape.value(s).data();
    let a_s = a_tilde.mul_dense(sv, k);
    let mut coarse = vec![0.0; k * k];
    gemm(k, n, k, sv, true, &a_s, false, &mut coarse, false);
    for i in 0..k {
        for j in i + 1..k {
            let m = 0.5 * (coarse[i * k + j] + coarse[j * k + i]);
            coarse[i * k + j] = m;
            coarse[j * k + i] = m;
        }
    }
    let st = tape.transpose(s)?;
    let x_pool = tape.matmul(st, x)?;
    Ok((Tensor::matrix(k, k, coarse), x_pool))
}

/// Graph handed to the next block: the coarsened adjacency without its
/// diagonal, carrying `features`.
pub fn pooled_graph(a_pool: &Tensor, features: Tensor) -> Result<Graph> {
    let (k, cols) = a_pool.require_matrix("pooled adjacency")?;
    let mut dense = a_pool.data().to_vec();
    for i in 0..k.min(cols) {
        dense[i * cols + i] = 0.0;
    }
    Graph::new(CsrMatrix::from_dense(k, cols, &dense), features)
}

/// Recorded classification pass.
pub struct ClassifyForward {
    pub logits: NodeId,
    /// Input graph and assignment of every pooling block.
    pub assignments: Vec<(Graph, NodeId)>,
    pub params: Vec<NodeId>,
}

pub fn classify_forward(tape: &mut Tape, model: &ClassifierModel, g: &Graph) -> Result<ClassifyForward> {
    if g.n_features() != model.input_width() {
        return Err(Error::DimensionMismatch(format!(
            "model expects {} features, graph has {}",
            model.input_width(),
            g.n_features()
        )));
    }
    let nodes = model.params.register(tape);
    let mut graph = g.clone();
    let mut h = tape.constant(g.features().clone());
    let mut assignments = Vec::with_capacity(model.blocks.len());
    for block in &model.blocks {
        h = mp_stack_forward(tape, &graph, h, &block.mp_layers, &nodes)?;
        let s = mlp_assign(tape, h, &resolve_pairs(&block.mlp_layers, &nodes), &block.mlp)?;
        let (a_pool, x_pool) = pool(tape, &coarsening_adjacency(&graph), h, s)?;
        let next = pooled_graph(&a_pool, tape.value(x_pool).clone())?;
        assignments.push((graph, s));
        graph = next;
        h = x_pool;
    }
    h = mp_stack_forward(tape, &graph, h, &model.post_layers, &nodes)?;
    let summed = tape.sum_axis(h, Axis::Rows)?;
    let pooled = match model.readout {
        PoolKind::Sum => summed,
        PoolKind::Mean => tape.div_const(summed, graph.n_vertices() as f64)?,
    };
    let logits = dense(tape, pooled, nodes[model.head.0], nodes[model.head.1])?;
    Ok(ClassifyForward {
        logits,
        assignments,
        params: nodes,
    })
}

/// Cross-entropy plus the summed auxiliary loss of every pooling block.
/// Blocks whose input graph has no edges contribute nothing.
fn graph_objective(
    model: &ClassifierModel,
    g: &Graph,
    cfg: &TrainConfig,
) -> Result<(Tape, NodeId, Vec<NodeId>, LossReport, usize)> {
    let label = g
        .graph_label()
        .ok_or_else(|| Error::InvalidConfig("graph without a label".into()))?;
    let mut tape = Tape::new();
    let fwd = classify_forward(&mut tape, model, g)?;
    let (mut loss, mut report) = cross_entropy_loss(&mut tape, fwd.logits, label)?;
    for (block_graph, s) in &fwd.assignments {
        if block_graph.n_edges() == 0 {
            continue;
        }
        let (aux, aux_report) = aux_loss(&mut tape, block_graph, *s, &cfg.loss)?;
        loss = tape.add(loss, aux)?;
        report.accumulate(&aux_report);
    }
    report.total = tape.value(loss).item();
    let predicted = argmax(tape.value(fwd.logits).data());
    Ok((tape, loss, fwd.params, report, predicted))
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Predicted class per graph.
pub fn predict(model: &ClassifierModel, graphs: &[&Graph]) -> Result<Vec<usize>> {
    graphs
        .iter()
        .map(|g| {
            let mut tape = Tape::new();
            let fwd = classify_forward(&mut tape, model, g)?;
            Ok(argmax(tape.value(fwd.logits).data()))
        })
        .collect()
}

/// Per-epoch training trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct ClassifyOutcome {
    /// Parameters of the epoch with the lowest validation loss.
    pub model: ClassifierModel,
    pub test_accuracy: f64,
    pub best_epoch: usize,
    pub history: Vec<ClassifyRecord>,
}

/// Mean loss and accuracy over `ids`.
fn score(model: &ClassifierModel, data: &GraphCollection, ids: &[usize], cfg: &TrainConfig) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0;
    for &i in ids {
        let g = &data.graphs()[i];
        let (_, _, _, report, predicted) = graph_objective(model, g, cfg)?;
        loss += report.total;
        correct += usize::from(Some(predicted) == g.graph_label());
    }
    let n = ids.len().max(1) as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Train on `train_ids` with 10% held out for early stopping, then report
/// accuracy on `test_ids`.
pub fn train_classifier(
    data: &GraphCollection,
    arch: &ClassifierArch,
    cfg: &TrainConfig,
    train_ids: &[usize],
    test_ids: &[usize],
) -> Result<ClassifyOutcome> {
    cfg.validate()?;
    if data.class_count() < 2 {
        return Err(Error::InvalidConfig("classification needs at least 2 classes".into()));
    }
    let labels = data.labels();
    let k_pool = arch.k_pool.unwrap_or_else(|| (data.mean_vertices() / 2.0).ceil() as usize).max(1);
    let mut model = ClassifierModel::new(data.n_features(), data.class_count(), k_pool, arch, cfg.seed)?;
    let (mut fit_ids, val_ids) = stratified_holdout(&labels, train_ids, 0.1, cfg.seed);
    let mut state = AdamState::new(&model.params);
    let mut rng = prng_stream(cfg.seed, streams::SHUFFLE);

    let mut best = (f64::INFINITY, 0, model.params.clone());
    let mut since_best = 0;
    let mut history = Vec::new();
    for epoch in 1..=cfg.epochs {
        fit_ids.shuffle(&mut rng);
        let mut train_loss = 0.0;
        for batch in fit_ids.chunks(cfg.batch_size) {
            let mut sum: Vec<Tensor> = model.params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
            for &i in batch {
                let (tape, loss, nodes, report, _) =
                    graph_objective(&model, &data.graphs()[i], cfg).map_err(|e| match e {
                        Error::NonFiniteValue { op } => Error::NonFiniteLoss {
                            epoch,
                            detail: format!("graph {i}: non-finite output of {op}"),
                        },
                        other => other,
                    })?;
                train_loss += report.total;
                let grads = tape.backward(loss)?;
                for (acc, &id) in sum.iter_mut().zip(&nodes) {
                    if let Some(g) = grads.get(id) {
                        acc.add_assign(g);
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for t in sum.iter_mut() {
                for v in t.data_mut() {
                    *v *= scale;
                }
            }
            if let Some(t) = sum.iter().position(|t| !t.all_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    detail: format!("gradient of {} is not finite", model.params.get(t).name),
                });
            }
            adam_step(&mut model.params, &sum, &mut state, cfg)?;
        }
        let (val_loss, val_accuracy) = if val_ids.is_empty() {
            (train_loss / fit_ids.len().max(1) as f64, f64::NAN)
        } else {
            score(&model, data, &val_ids, cfg)?
        };
        history.push(ClassifyRecord {
            epoch,
            train_loss: train_loss / fit_ids.len().max(1) as f64,
            val_loss,
            val_accuracy,
        });
        debug!("epoch {epoch}: train {:.4} val {val_loss:.4} acc {val_accuracy:.3}", history[epoch - 1].train_loss);
        if val_loss < best.0 {
            best = (val_loss, epoch, model.params.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                info!("early stop at epoch {epoch}, best epoch {}", best.1);
                break;
            }
        }
    }
    model.params = best.2;
    let test_graphs: Vec<&Graph> = test_ids.iter().map(|&i| &data.graphs()[i]).collect();
    let predicted = predict(&model, &test_graphs)?;
    let correct = predicted
        .iter()
        .zip(&test_graphs)
        .filter(|(p, g)| Some(**p) == g.graph_label())
        .count();
    Ok(ClassifyOutcome {
        model,
        test_accuracy: correct as f64 / test_ids.len().max(1) as f64,
        best_epoch: best.1,
        history,
    })
}
