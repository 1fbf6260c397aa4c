//! Message-passing layers and the assignment MLP.
//!
//! GTVConv computes `σ[(I − δ L̂_Γ) X Θ]`, one gradient-descent step on the
//! graph total variation of the input features followed by a dense map. The
//! edge reweighting `Γ̂` is rebuilt from the layer input on every forward
//! pass and enters the tape as a constant sparse operand.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::error::{Error, Result};
use crate::graph::{sym_norm_with_self_loops, Graph};
use crate::sparse::CsrMatrix;

/// Default stability floor for `Γ̂` denominators.
pub const DEFAULT_EPSILON: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    /// ELU with α = 1.
    Elu,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: NodeId) -> Result<NodeId> {
        match self {
            Activation::Identity => Ok(x),
            Activation::Relu => tape.relu(x),
            Activation::Elu => tape.elu(x),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" | "linear" => Ok(Activation::Identity),
            "relu" => Ok(Activation::Relu),
            "elu" => Ok(Activation::Elu),
            other => Err(Error::InvalidConfig(format!("unknown activation {other:?}"))),
        }
    }
}

/// Which GTV the layer descends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GtvVariant {
    /// `I − δ L̂_Γ`.
    Simplified,
    /// `I − δ D^{-1/2} L_Γ D^{-1/2}` with degree-scaled feature differences.
    DegreeWeighted,
}

/// Hyperparameters of one GTVConv layer. The weight `Θ` lives with the
/// model parameters and is passed to [`gtvconv_forward`] as a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtvConvParams {
    pub delta: f64,
    pub epsilon: f64,
    pub activation: Activation,
    pub variant: GtvVariant,
}

impl GtvConvParams {
    pub fn new(delta: f64, activation: Activation) -> Self {
        Self {
            delta,
            epsilon: DEFAULT_EPSILON,
            activation,
            variant: GtvVariant::Simplified,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return Err(Error::InvalidConfig(format!("delta must be nonnegative, got {}", self.delta)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }
}

fn check_rows(g: &Graph, x: &Tensor) -> Result<usize> {
    let (rows, cols) = x.require_matrix("features")?;
    if rows != g.n_vertices() {
        return Err(Error::DimensionMismatch(format!(
            "{rows} feature rows for {} vertices",
            g.n_vertices()
        )));
    }
    Ok(cols)
}

fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// `γ̂_ij = a_ij / max(‖x_i − x_j‖₁, ε)` on the sparsity pattern of `A`.
pub fn build_gamma_hat(g: &Graph, x: &Tensor, eps: f64) -> Result<CsrMatrix> {
    check_rows(g, x)?;
    if !(eps > 0.0) {
        return Err(Error::InvalidConfig(format!("epsilon must be positive, got {eps}")));
    }
    Ok(g.adjacency()
        .map_values(|i, j, a| a / l1_distance(x.row(i), x.row(j)).max(eps)))
}

/// Degree-weighted counterpart of [`build_gamma_hat`]:
/// `γ_ij = a_ij / max(‖√(a_ij/d_i)·x_i − √(a_ij/d_j)·x_j‖₁, ε)`.
pub fn build_gamma_weighted(g: &Graph, x: &Tensor, eps: f64) -> Result<CsrMatrix> {
    check_rows(g, x)?;
    let deg = g.degrees();
    if let Some(i) = deg.iter().position(|&d| d <= 0.0) {
        return Err(Error::IsolatedVertex(i));
    }
    Ok(g.adjacency().map_values(|i, j, a| {
        let (si, sj) = ((a / deg[i]).sqrt(), (a / deg[j]).sqrt());
        let q: f64 = x.row(i).iter().zip(x.row(j)).map(|(u, v)| (si * u - sj * v).abs()).sum();
        a / q.max(eps)
    }))
}

/// `L̂_Γ = diag(Γ̂·1) − Γ̂`.
pub fn gtv_laplacian(gamma: &CsrMatrix) -> Result<CsrMatrix> {
    validate_gamma(gamma)?;
    let n = gamma.rows();
    let deg = gamma.row_sums();
    let mut triplets = Vec::with_capacity(gamma.nnz() + n);
    for r in 0..n {
        triplets.push((r, r, deg[r]));
        triplets.extend(gamma.row(r).map(|(c, v)| (r, c, -v)));
    }
    CsrMatrix::from_triplets(n, n, triplets)
}

fn validate_gamma(gamma: &CsrMatrix) -> Result<()> {
    if gamma.rows() != gamma.cols() {
        return Err(Error::NonSquare {
            rows: gamma.rows(),
            cols: gamma.cols(),
        });
    }
    if !gamma.is_symmetric() {
        return Err(Error::AsymmetricInput);
    }
    for r in 0..gamma.rows() {
        for (c, v) in gamma.row(r) {
            if c == r || v < 0.0 {
                return Err(Error::InvalidConfig(format!("Γ entry ({r}, {c}) = {v}")));
            }
        }
    }
    Ok(())
}

/// Propagation matrix `I − δ L̂_Γ` (simplified) or
/// `I − δ D^{-1/2} L_Γ D^{-1/2}` (degree-weighted, `degrees` required).
pub fn propagation_matrix(gamma: &CsrMatrix, delta: f64, degrees: Option<&[f64]>) -> Result<CsrMatrix> {
    validate_gamma(gamma)?;
    let n = gamma.rows();
    let dg = gamma.row_sums();
    let scale: Vec<f64> = match degrees {
        Some(d) => {
            if let Some(i) = d.iter().position(|&v| v <= 0.0) {
                return Err(Error::IsolatedVertex(i));
            }
            d.to_vec()
        }
        None => vec![1.0; n],
    };
    let mut triplets = Vec::with_capacity(gamma.nnz() + n);
    for r in 0..n {
        triplets.push((r, r, 1.0 - delta * dg[r] / scale[r]));
        triplets.extend(gamma.row(r).map(|(c, v)| (r, c, delta * v / (scale[r] * scale[c]).sqrt())));
    }
    CsrMatrix::from_triplets(n, n, triplets)
}

/// Reweighting for a GTVConv layer fed with features `x`.
pub fn layer_gamma(g: &Graph, x: &Tensor, p: &GtvConvParams) -> Result<CsrMatrix> {
    match p.variant {
        GtvVariant::Simplified => build_gamma_hat(g, x, p.epsilon),
        GtvVariant::DegreeWeighted => build_gamma_weighted(g, x, p.epsilon),
    }
}

/// GTVConv forward pass: `σ[(I − δ L̂_Γ) X Θ]` with `Γ̂` built from the
/// current value of `x` and frozen on the tape.
pub fn gtvconv_forward(tape: &mut Tape, g: &Graph, x: NodeId, weight: NodeId, p: &GtvConvParams) -> Result<NodeId> {
    p.validate()?;
    let gamma = layer_gamma(g, tape.value(x), p)?;
    gtvconv_forward_with_gamma(tape, g, &gamma, x, weight, p)
}

/// [`gtvconv_forward`] with a caller-supplied reweighting.
pub fn gtvconv_forward_with_gamma(
    tape: &mut Tape,
    g: &Graph,
    gamma: &CsrMatrix,
    x: NodeId,
    weight: NodeId,
    p: &GtvConvParams,
) -> Result<NodeId> {
    let f_in = check_rows(g, tape.value(x))?;
    let (w_in, w_out) = tape.value(weight).require_matrix("gtvconv weight")?;
    if w_in != f_in {
        return Err(Error::DimensionMismatch(format!("weight expects {w_in} inputs, features have {f_in}")));
    }
    let degrees = match p.variant {
        GtvVariant::Simplified => None,
        GtvVariant::DegreeWeighted => Some(g.degrees()),
    };
    let prop = Arc::new(propagation_matrix(gamma, p.delta, degrees.as_deref())?);
    let mixed = if w_out <= f_in {
        let xw = tape.matmul(x, weight)?;
        tape.sparse_matmul(prop, xw)?
    } else {
        let px = tape.sparse_matmul(prop, x)?;
        tape.matmul(px, weight)?
    };
    p.activation.apply(tape, mixed)
}

/// Exact multivariate GTV descent step, one reweighting per feature:
/// `x'^f = (I − δ L_{Γ^f}) x^f` with `γ^f_ij = a_ij / max(|x_i^f − x_j^f|, ε)`.
///
/// Reference implementation for small graphs; not differentiable.
pub fn gtv_update_per_feature(g: &Graph, x: &Tensor, delta: f64, eps: f64) -> Result<Tensor> {
    let f = check_rows(g, x)?;
    let n = g.n_vertices();
    let mut out = x.clone();
    for i in 0..n {
        for (j, a) in g.adjacency().row(i) {
            for k in 0..f {
                let diff = x.get(i, k) - x.get(j, k);
                let gamma = a / diff.abs().max(eps);
                out.data_mut()[i * f + k] -= delta * gamma * diff;
            }
        }
    }
    Ok(out)
}

/// Graph total variation of multivariate features, `Σ_{i<j} a_ij ‖x_i − x_j‖₁`.
pub fn feature_gtv(g: &Graph, x: &Tensor) -> f64 {
    g.undirected_edges()
        .iter()
        .map(|&(i, j, a)| a * l1_distance(x.row(i), x.row(j)))
        .sum()
}

/// GCN layer `σ(Ã' X Θ)` with `Ã'` the normalized adjacency plus self-loops.
pub fn gcn_forward(tape: &mut Tape, g: &Graph, x: NodeId, weight: NodeId, activation: Activation) -> Result<NodeId> {
    let prop = Arc::new(sym_norm_with_self_loops(g));
    gcn_forward_with(tape, g, &prop, x, weight, activation)
}

/// [`gcn_forward`] reusing a precomputed propagation matrix.
pub fn gcn_forward_with(
    tape: &mut Tape,
    g: &Graph,
    prop: &Arc<CsrMatrix>,
    x: NodeId,
    weight: NodeId,
    activation: Activation,
) -> Result<NodeId> {
    let f_in = check_rows(g, tape.value(x))?;
    let (w_in, _) = tape.value(weight).require_matrix("gcn weight")?;
    if w_in != f_in {
        return Err(Error::DimensionMismatch(format!("weight expects {w_in} inputs, features have {f_in}")));
    }
    let xw = tape.matmul(x, weight)?;
    let mixed = tape.sparse_matmul(Arc::clone(prop), xw)?;
    activation.apply(tape, mixed)
}

/// Shape of an assignment MLP: hidden widths and activation; the output
/// layer has `k` units followed by a row softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub k: usize,
}

impl MlpParams {
    /// `(fan_in, fan_out)` of each dense layer for inputs of width `f_in`.
    pub fn layer_dims(&self, f_in: usize) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = f_in;
        for &h in self.hidden.iter().chain(std::iter::once(&self.k)) {
            dims.push((prev, h));
            prev = h;
        }
        dims
    }
}

/// Dense layer `x W + 1 bᵀ`.
pub fn dense(tape: &mut Tape, x: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
    let (rows, f_in) = tape.value(x).require_matrix("dense")?;
    let (w_in, w_out) = tape.value(weight).require_matrix("dense weight")?;
    if w_in != f_in || tape.value(bias).shape() != [1, w_out] {
        return Err(Error::DimensionMismatch(format!(
            "dense layer {w_in}x{w_out} (bias {:?}) applied to width {f_in}",
            tape.value(bias).shape()
        )));
    }
    let xw = tape.matmul(x, weight)?;
    let ones = tape.constant(Tensor::filled(&[rows, 1], 1.0));
    let b = tape.matmul(ones, bias)?;
    tape.add(xw, b)
}

/// `S = softmax(MLP(x))`; `layers` holds `(weight, bias)` nodes in order.
pub fn mlp_assign(tape: &mut Tape, x: NodeId, layers: &[(NodeId, NodeId)], p: &MlpParams) -> Result<NodeId> {
    if layers.len() != p.hidden.len() + 1 {
        return Err(Error::DimensionMismatch(format!(
            "{} weight pairs for {} layers",
            layers.len(),
            p.hidden.len() + 1
        )));
    }
    let mut h = x;
    for (idx, &(w, b)) in layers.iter().enumerate() {
        h = dense(tape, h, w, b)?;
        if idx + 1 < layers.len() {
            h = p.activation.apply(tape, h)?;
        }
    }
    if tape.value(h).cols() != p.k {
        return Err(Error::DimensionMismatch(format!("MLP ends in {} units, k = {}", tape.value(h).cols(), p.k)));
    }
    tape.row_softmax(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::gen_ring;

    fn edge_graph(x: Vec<Vec<f64>>) -> Graph {
        let n = x.len();
        Graph::from_edges(n, &[(0, 1, 1.0)], Tensor::from_rows(&x).unwrap()).unwrap()
    }

    #[test]
    fn gamma_hat_values() {
        let g = edge_graph(vec![vec![1.0, 2.0], vec![1.0, 0.0]]);
        let gh = build_gamma_hat(&g, g.features(), 1e-3).unwrap();
        assert_eq!(gh.get(0, 1), 0.5);
        assert_eq!(gh.get(1, 0), 0.5);

        let g = edge_graph(vec![vec![3.0], vec![3.0]]);
        let gh = build_gamma_hat(&g, g.features(), 1e-3).unwrap();
        assert!((gh.get(0, 1) - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn gamma_hat_keeps_sparsity() {
        let g = gen_ring(5).unwrap();
        let gh = build_gamma_hat(&g, g.features(), 1e-3).unwrap();
        assert_eq!(gh.get(0, 2), 0.0);
        assert_eq!(gh.nnz(), g.adjacency().nnz());
        assert!(gh.is_symmetric());
    }

    #[test]
    fn gamma_hat_dimension_checked() {
        let g = gen_ring(5).unwrap();
        assert!(matches!(build_gamma_hat(&g, &Tensor::zeros(&[4, 2]), 1e-3), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn laplacian_of_single_edge() {
        let gamma = CsrMatrix::from_dense(2, 2, &[0.0, 0.5, 0.5, 0.0]);
        let l = gtv_laplacian(&gamma).unwrap();
        assert_eq!(l.to_dense(), vec![0.5, -0.5, -0.5, 0.5]);
        let zero = CsrMatrix::from_dense(3, 3, &[0.0; 9]);
        assert!(gtv_laplacian(&zero).unwrap().values().iter().all(|&v| v == 0.0));
        let asym = CsrMatrix::from_dense(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(gtv_laplacian(&asym), Err(Error::AsymmetricInput)));
    }

    fn run_conv(g: &Graph, weight: Tensor, p: &GtvConvParams) -> Tensor {
        let mut tape = Tape::new();
        let x = tape.constant(g.features().clone());
        let w = tape.param(weight);
        let y = gtvconv_forward(&mut tape, g, x, w, p).unwrap();
        tape.value(y).clone()
    }

    #[test]
    fn gtvconv_two_vertex_example() {
        let g = edge_graph(vec![vec![1.0, 2.0], vec![1.0, 0.0]]);
        let p = GtvConvParams::new(1.0, Activation::Identity);
        let y = run_conv(&g, Tensor::identity(2), &p);
        assert_eq!(y.data(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn gtvconv_zero_step_is_dense_layer() {
        let g = gen_ring(6).unwrap();
        let w = Tensor::from_rows(&[vec![0.5, -1.0, 2.0], vec![1.5, 0.25, -0.5]]).unwrap();
        let p = GtvConvParams::new(0.0, Activation::Relu);
        let y = run_conv(&g, w.clone(), &p);
        let mut tape = Tape::new();
        let x = tape.constant(g.features().clone());
        let wn = tape.constant(w);
        let xw = tape.matmul(x, wn).unwrap();
        let expect = tape.relu(xw).unwrap();
        assert!(y.max_abs_diff(tape.value(expect)) < 1e-15);
    }

    #[test]
    fn gtvconv_keeps_constant_features() {
        let g = Graph::from_edges(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 2, 1.0)], Tensor::filled(&[4, 3], 0.7))
            .unwrap();
        let y = run_conv(&g, Tensor::identity(3), &GtvConvParams::new(0.4, Activation::Identity));
        assert!(y.max_abs_diff(g.features()) < 1e-12);
    }

    #[test]
    fn per_feature_example() {
        let g = edge_graph(vec![vec![1.0, 2.0], vec![1.0, 0.0]]);
        let y = gtv_update_per_feature(&g, g.features(), 0.5, 1e-3).unwrap();
        assert_eq!(y.data(), &[1.0, 1.5, 1.0, 0.5]);
    }

    #[test]
    fn per_feature_constant_column_unchanged() {
        let g = gen_ring(7).unwrap();
        let mut x = g.features().clone();
        for r in 0..7 {
            x.set(r, 1, 4.0);
        }
        let y = gtv_update_per_feature(&g, &x, 0.1, 1e-3).unwrap();
        assert!((0..7).all(|r| y.get(r, 1) == 4.0));
    }

    #[test]
    fn weighted_variant_needs_degrees() {
        let g = Graph::from_edges(3, &[(0, 1, 1.0)], Tensor::zeros(&[3, 1])).unwrap();
        let mut p = GtvConvParams::new(0.5, Activation::Identity);
        p.variant = GtvVariant::DegreeWeighted;
        let mut tape = Tape::new();
        let x = tape.constant(g.features().clone());
        let w = tape.param(Tensor::identity(1));
        assert!(matches!(gtvconv_forward(&mut tape, &g, x, w, &p), Err(Error::IsolatedVertex(2))));
    }

    #[test]
    fn gcn_examples() {
        let single = Graph::from_edges(1, &[], Tensor::from_rows(&[vec![2.0, -1.0]]).unwrap()).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(single.features().clone());
        let w = tape.param(Tensor::identity(2));
        let y = gcn_forward(&mut tape, &single, x, w, Activation::Identity).unwrap();
        assert_eq!(tape.value(y), single.features());

        let g = edge_graph(vec![vec![3.0], vec![3.0]]);
        let x = tape.constant(g.features().clone());
        let w = tape.param(Tensor::identity(1));
        let y = gcn_forward(&mut tape, &g, x, w, Activation::Identity).unwrap();
        assert!(tape.value(y).max_abs_diff(g.features()) < 1e-15);

        let g = edge_graph(vec![vec![1.0], vec![0.0]]);
        let x = tape.constant(g.features().clone());
        let y = gcn_forward(&mut tape, &g, x, w, Activation::Identity).unwrap();
        assert_eq!(tape.value(y).data(), &[0.5, 0.5]);
    }

    fn mlp_nodes(tape: &mut Tape, p: &MlpParams, f_in: usize, fill: f64) -> Vec<(NodeId, NodeId)> {
        p.layer_dims(f_in)
            .into_iter()
            .map(|(i, o)| {
                let w = tape.param(Tensor::filled(&[i, o], fill));
                let b = tape.param(Tensor::zeros(&[1, o]));
                (w, b)
            })
            .collect()
    }

    #[test]
    fn mlp_zero_weights_give_uniform_rows() {
        let p = MlpParams {
            hidden: vec![4],
            activation: Activation::Relu,
            k: 3,
        };
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::filled(&[5, 2], 1.3));
        let layers = mlp_nodes(&mut tape, &p, 2, 0.0);
        let s = mlp_assign(&mut tape, x, &layers, &p).unwrap();
        assert!(tape.value(s).data().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn mlp_saturates_to_one_hot() {
        let p = MlpParams {
            hidden: vec![],
            activation: Activation::Relu,
            k: 3,
        };
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::filled(&[2, 1], 1.0));
        let w = tape.param(Tensor::from_rows(&[vec![100.0, 0.0, 0.0]]).unwrap());
        let b = tape.param(Tensor::zeros(&[1, 3]));
        let s = mlp_assign(&mut tape, x, &[(w, b)], &p).unwrap();
        assert!((tape.value(s).get(0, 0) - 1.0).abs() < 1e-40_f64.max(1e-30));
        assert!(tape.value(s).get(1, 2) < 1e-40);
    }
}
