use std::collections::BTreeMap;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use super::{
    adam_step, build_dense_stack, build_mp_stack, is_row_stochastic, mp_stack_forward, resolve_pairs, AdamState,
    MpLayer, ParamSet, TrainConfig,
};
use crate::autodiff::{NodeId, Tape, Tensor};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::layers::{mlp_assign, Activation, GtvVariant, MlpParams, DEFAULT_EPSILON};
use crate::losses::{aux_loss, LossReport};
use crate::rng::{prng_stream, streams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MpKind {
    Gtvconv,
    Gcn,
}

/// Message-passing stack: one layer per entry of `channels`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpConfig {
    pub kind: MpKind,
    pub channels: Vec<usize>,
    pub activation: Activation,
    pub delta: f64,
    pub epsilon: f64,
    pub variant: GtvVariant,
}

impl MpConfig {
    pub fn gtvconv(channels: Vec<usize>, activation: Activation, delta: f64) -> Self {
        Self {
            kind: MpKind::Gtvconv,
            channels,
            activation,
            delta,
            epsilon: DEFAULT_EPSILON,
            variant: GtvVariant::Simplified,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.contains(&0) {
            return Err(Error::InvalidConfig("message-passing widths must be positive".into()));
        }
        if self.kind == MpKind::Gtvconv {
            crate::layers::GtvConvParams {
                delta: self.delta,
                epsilon: self.epsilon,
                activation: self.activation,
                variant: self.variant,
            }
            .validate()?;
        }
        Ok(())
    }
}

/// Shape of a clustering network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterArch {
    pub mp: MpConfig,
    pub mlp_hidden: Vec<usize>,
    pub mlp_activation: Activation,
}

impl Default for ClusterArch {
    /// Two 512-wide ELU GTVConv layers with δ = 0.311 and one 256-wide ReLU
    /// hidden layer in the assignment MLP.
    fn default() -> Self {
        Self {
            mp: MpConfig::gtvconv(vec![512, 512], Activation::Elu, 0.311),
            mlp_hidden: vec![256],
            mlp_activation: Activation::Relu,
        }
    }
}

/// Message-passing stack followed by a softmax assignment MLP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub mp_layers: Vec<MpLayer>,
    pub assign_mlp: MlpParams,
    /// `(weight, bias)` parameter indices of the MLP layers.
    pub mlp_layers: Vec<(usize, usize)>,
    pub k: usize,
    pub params: ParamSet,
}

impl ClusterModel {
    /// Fresh model for `f_in` input features, initialized from `seed`.
    pub fn new(f_in: usize, k: usize, arch: &ClusterArch, seed: u64) -> Result<Self> {
        arch.mp.validate()?;
        if k == 0 || f_in == 0 {
            return Err(Error::InvalidConfig(format!("need k ≥ 1 and features, got k={k}, f={f_in}")));
        }
        let mut rng = prng_stream(seed, streams::INIT);
        let mut params = ParamSet::new();
        let (mp_layers, width) = build_mp_stack(&arch.mp, f_in, "mp", &mut params, &mut rng);
        let assign_mlp = MlpParams {
            hidden: arch.mlp_hidden.clone(),
            activation: arch.mlp_activation,
            k,
        };
        let mlp_layers = build_dense_stack(&assign_mlp.layer_dims(width), "mlp", &mut params, &mut rng);
        Ok(Self {
            mp_layers,
            assign_mlp,
            mlp_layers,
            k,
            params,
        })
    }

    pub fn input_width(&self) -> usize {
        match self.mp_layers.first() {
            Some(l) => self.params.get(l.weight).value.rows(),
            None => self.params.get(self.mlp_layers[0].0).value.rows(),
        }
    }
}

/// Record the forward pass; returns the assignment node and the parameter
/// nodes in [`ParamSet`] order.
pub fn cluster_forward(tape: &mut Tape, model: &ClusterModel, g: &Graph) -> Result<(NodeId, Vec<NodeId>)> {
    if g.n_features() != model.input_width() {
        return Err(Error::DimensionMismatch(format!(
            "model expects {} features, graph has {}",
            model.input_width(),
            g.n_features()
        )));
    }
    let nodes = model.params.register(tape);
    let x = tape.constant(g.features().clone());
    let h = mp_stack_forward(tape, g, x, &model.mp_layers, &nodes)?;
    let s = mlp_assign(tape, h, &resolve_pairs(&model.mlp_layers, &nodes), &model.assign_mlp)?;
    Ok((s, nodes))
}

/// Loss values after one epoch's forward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub total: f64,
    pub components: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct ClusterOutcome {
    pub model: ClusterModel,
    /// Soft assignment from the trained parameters.
    pub assignment: Tensor,
    /// Loss of the trained parameters.
    pub report: LossReport,
    pub history: Vec<EpochRecord>,
}

fn non_finite(epoch: usize, e: Error) -> Error {
    match e {
        Error::NonFiniteValue { op } => Error::NonFiniteLoss {
            epoch,
            detail: format!("non-finite output of {op}"),
        },
        other => other,
    }
}

fn evaluate(model: &ClusterModel, g: &Graph, cfg: &TrainConfig, epoch: usize) -> Result<(Tape, NodeId, NodeId, Vec<NodeId>, LossReport)> {
    let mut tape = Tape::new();
    let (s, nodes) = cluster_forward(&mut tape, model, g).map_err(|e| non_finite(epoch, e))?;
    let (loss, report) = aux_loss(&mut tape, g, s, &cfg.loss).map_err(|e| non_finite(epoch, e))?;
    if !report.total.is_finite() {
        return Err(Error::NonFiniteLoss {
            epoch,
            detail: format!("{:?}", report.components),
        });
    }
    if !is_row_stochastic(tape.value(s), 1e-9) {
        return Err(Error::NonFiniteLoss {
            epoch,
            detail: "assignment rows left the simplex".into(),
        });
    }
    Ok((tape, s, loss, nodes, report))
}

/// Unsupervised training on a single graph for `cfg.epochs` full-graph
/// Adam steps.
pub fn train_cluster(g: &Graph, k: usize, arch: &ClusterArch, cfg: &TrainConfig) -> Result<ClusterOutcome> {
    cfg.validate()?;
    if k < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 clusters, got {k}")));
    }
    if k >= g.n_vertices() {
        return Err(Error::InvalidConfig(format!(
            "{k} clusters for {} vertices; k must be below the vertex count",
            g.n_vertices()
        )));
    }
    if !g.is_connected() {
        warn!("graph is not connected; clusters may follow components");
    }
    let mut model = ClusterModel::new(g.n_features(), k, arch, cfg.seed)?;
    let mut state = AdamState::new(&model.params);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let (tape, _, loss, nodes, report) = evaluate(&model, g, cfg, epoch)?;
        let grads = tape.backward(loss)?;
        let grads: Vec<Tensor> = nodes.iter().map(|&id| grads.wrt(&tape, id)).collect();
        if let Some(i) = grads.iter().position(|t| !t.all_finite()) {
            return Err(Error::NonFiniteLoss {
                epoch,
                detail: format!("gradient of {} is not finite", model.params.get(i).name),
            });
        }
        adam_step(&mut model.params, &grads, &mut state, cfg)?;
        if epoch % 100 == 0 || epoch == 1 {
            info!("epoch {epoch}: loss {:.6} {:?}", report.total, report.components);
        } else {
            debug!("epoch {epoch}: loss {:.6}", report.total);
        }
        history.push(EpochRecord {
            epoch,
            total: report.total,
            components: report.components,
        });
    }
    let (tape, s, _, _, report) = evaluate(&model, g, cfg, cfg.epochs + 1)?;
    Ok(ClusterOutcome {
        assignment: tape.value(s).clone(),
        model,
        report,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::gen_ring;
    use crate::losses::{AuxLoss, TvLossConfig};

    fn small_arch() -> ClusterArch {
        ClusterArch {
            mp: MpConfig::gtvconv(vec![8], Activation::Elu, 0.3),
            mlp_hidden: vec![8],
            mlp_activation: Activation::Relu,
        }
    }

    #[test]
    fn zero_mlp_gives_uniform_assignment() {
        let g = gen_ring(10).unwrap();
        let mut model = ClusterModel::new(2, 3, &small_arch(), 1).unwrap();
        for &(w, b) in &model.mlp_layers.clone() {
            let shape = model.params.get(w).value.shape().to_vec();
            *model.params.value_mut(w) = Tensor::zeros(&shape);
            let shape = model.params.get(b).value.shape().to_vec();
            *model.params.value_mut(b) = Tensor::zeros(&shape);
        }
        let mut tape = Tape::new();
        let (s, _) = cluster_forward(&mut tape, &model, &g).unwrap();
        assert!(tape.value(s).data().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn single_cluster_is_all_ones() {
        let g = gen_ring(6).unwrap();
        let model = ClusterModel::new(2, 1, &small_arch(), 0).unwrap();
        let mut tape = Tape::new();
        let (s, _) = cluster_forward(&mut tape, &model, &g).unwrap();
        assert!(tape.value(s).data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn forward_is_deterministic() {
        let g = gen_ring(12).unwrap();
        let run = || {
            let model = ClusterModel::new(2, 3, &small_arch(), 42).unwrap();
            let mut tape = Tape::new();
            let (s, _) = cluster_forward(&mut tape, &model, &g).unwrap();
            tape.value(s).data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn zero_loss_weights_leave_parameters_alone() {
        let g = gen_ring(10).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            loss: AuxLoss::Tvgnn(TvLossConfig::new(0.0, 0.0)),
            seed: 3,
            ..TrainConfig::default()
        };
        let out = train_cluster(&g, 3, &small_arch(), &cfg).unwrap();
        assert!(out.history.iter().all(|r| r.total == 0.0));
        assert_eq!(out.model.params, ClusterModel::new(2, 3, &small_arch(), 3).unwrap().params);
    }

    #[test]
    fn rejects_too_many_clusters() {
        let g = gen_ring(4).unwrap();
        let cfg = TrainConfig::default();
        assert!(matches!(train_cluster(&g, 4, &small_arch(), &cfg), Err(Error::InvalidConfig(_))));
        assert!(matches!(train_cluster(&g, 1, &small_arch(), &cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn width_mismatch_reported() {
        let g = gen_ring(6).unwrap();
        let model = ClusterModel::new(3, 2, &small_arch(), 0).unwrap();
        let mut tape = Tape::new();
        assert!(matches!(cluster_forward(&mut tape, &model, &g), Err(Error::DimensionMismatch(_))));
    }
}
