//! Clustering and classification models, their optimizer and training loops.

mod checkpoint;
mod classify;
mod cluster;
mod optim;
mod params;
mod split;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use classify::{
    classify_forward, pool, pooled_graph, predict, train_classifier, ClassifyForward, ClassifierArch, ClassifierModel, ClassifyOutcome,
    ClassifyRecord, PoolBlock, PoolKind,
};
pub use cluster::{
    cluster_forward, train_cluster, ClusterArch, ClusterModel, ClusterOutcome, EpochRecord, MpConfig, MpKind,
};
pub use optim::{adam_step, AdamState};
pub use params::{Param, ParamSet};
pub use split::{stratified_kfold, stratified_holdout};

use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::layers::{gcn_forward_with, gtvconv_forward, Activation, GtvConvParams};
use crate::losses::{AuxLoss, TvLossConfig};

/// Optimization settings shared by both tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Weight of `Σ θ²` over weight matrices (biases excluded).
    pub l2: f64,
    pub loss: AuxLoss,
    pub seed: u64,
    /// Epochs without validation improvement before stopping (classification).
    pub patience: usize,
    /// Graphs per optimizer step (classification).
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            l2: 0.0,
            loss: AuxLoss::Tvgnn(TvLossConfig::new(0.785, 0.514)),
            seed: 0,
            patience: 20,
            batch_size: 8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.learning_rate > 0.0) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad(format!("Adam betas must lie in [0, 1), got {} and {}", self.beta1, self.beta2));
        }
        if !(self.adam_eps > 0.0) || !(self.l2 >= 0.0) {
            return bad(format!("invalid adam_eps {} or l2 {}", self.adam_eps, self.l2));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        Ok(())
    }
}

/// One message-passing layer: hyperparameters plus the index of its weight
/// in the owning model's [`ParamSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpLayer {
    pub kind: MpLayerKind,
    pub weight: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum MpLayerKind {
    Gtvconv(GtvConvParams),
    Gcn { activation: Activation },
}

/// Build `layers` from `cfg`, appending Glorot-initialized weights to `params`.
fn build_mp_stack(
    cfg: &MpConfig,
    f_in: usize,
    prefix: &str,
    params: &mut ParamSet,
    rng: &mut crate::rng::Prng,
) -> (Vec<MpLayer>, usize) {
    let mut layers = Vec::with_capacity(cfg.channels.len());
    let mut width = f_in;
    for (i, &out) in cfg.channels.iter().enumerate() {
        let weight = params.push_glorot(format!("{prefix}{i}.weight"), width, out, rng);
        let kind = match cfg.kind {
            MpKind::Gtvconv => MpLayerKind::Gtvconv(GtvConvParams {
                delta: cfg.delta,
                epsilon: cfg.epsilon,
                activation: cfg.activation,
                variant: cfg.variant,
            }),
            MpKind::Gcn => MpLayerKind::Gcn {
                activation: cfg.activation,
            },
        };
        layers.push(MpLayer { kind, weight });
        width = out;
    }
    (layers, width)
}

fn mp_stack_forward(tape: &mut Tape, g: &Graph, x: NodeId, layers: &[MpLayer], nodes: &[NodeId]) -> Result<NodeId> {
    let mut h = x;
    let mut gcn_prop = None;
    for layer in layers {
        let w = nodes[layer.weight];
        h = match &layer.kind {
            MpLayerKind::Gtvconv(p) => gtvconv_forward(tape, g, h, w, p)?,
            MpLayerKind::Gcn { activation } => {
                let prop = gcn_prop.get_or_insert_with(|| std::sync::Arc::new(crate::graph::sym_norm_with_self_loops(g)));
                gcn_forward_with(tape, g, prop, h, w, *activation)?
            }
        };
    }
    Ok(h)
}

/// Dense layers `(weight, bias)` of an MLP, as parameter indices.
fn build_dense_stack(
    dims: &[(usize, usize)],
    prefix: &str,
    params: &mut ParamSet,
    rng: &mut crate::rng::Prng,
) -> Vec<(usize, usize)> {
    dims.iter()
        .enumerate()
        .map(|(i, &(fan_in, fan_out))| {
            let w = params.push_glorot(format!("{prefix}{i}.weight"), fan_in, fan_out, rng);
            let b = params.push(format!("{prefix}{i}.bias"), Tensor::zeros(&[1, fan_out]), false);
            (w, b)
        })
        .collect()
}

fn resolve_pairs(pairs: &[(usize, usize)], nodes: &[NodeId]) -> Vec<(NodeId, NodeId)> {
    pairs.iter().map(|&(w, b)| (nodes[w], nodes[b])).collect()
}

/// Every row is nonnegative and sums to one within `tol`.
pub fn is_row_stochastic(s: &Tensor, tol: f64) -> bool {
    (0..s.rows()).all(|r| {
        let row = s.row(r);
        row.iter().all(|&v| (0.0..=1.0 + tol).contains(&v)) && (row.iter().sum::<f64>() - 1.0).abs() <= tol
    })
}
