//! Clustering and classification objectives.
//!
//! The total-variation loss combines the graph total variation of the soft
//! assignment (small when adjacent vertices share a cluster) with an
//! asymmetric ℓ1 balance term measured against a per-column quantile. Both
//! terms are rescaled into `[0, 1]`. MinCut and DMoN are provided for
//! comparison.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{asym_abs, Axis, NodeId, Tape, Tensor};
use crate::error::{Error, Result};
use crate::graph::{sym_norm_adjacency, Graph};
use crate::sparse::CsrMatrix;

/// How the balance term treats the per-column quantile during backprop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantileGradient {
    /// Quantile is a constant of the backward pass.
    #[default]
    Frozen,
    /// Gradient also reaches the selected entry through the quantile.
    Routed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvLossConfig {
    /// Asymmetry ρ; `None` means `K − 1`.
    pub rho: Option<f64>,
    pub alpha1: f64,
    pub alpha2: f64,
    #[serde(default)]
    pub quantile_gradient: QuantileGradient,
}

impl Default for TvLossConfig {
    fn default() -> Self {
        Self {
            rho: None,
            alpha1: 1.0,
            alpha2: 1.0,
            quantile_gradient: QuantileGradient::Frozen,
        }
    }
}

impl TvLossConfig {
    pub fn new(alpha1: f64, alpha2: f64) -> Self {
        Self {
            alpha1,
            alpha2,
            ..Self::default()
        }
    }

    pub fn rho_for(&self, k: usize) -> f64 {
        self.rho.unwrap_or(k.saturating_sub(1) as f64)
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        let rho = self.rho_for(k);
        if !(rho >= 1.0) {
            return Err(Error::InvalidConfig(format!("rho must be at least 1, got {rho}")));
        }
        if !(self.alpha1 >= 0.0) || !(self.alpha2 >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "loss weights must be nonnegative, got {} and {}",
                self.alpha1, self.alpha2
            )));
        }
        Ok(())
    }
}

/// DMoN options. The degree product is used as `dᵀd` unless `normalized`
/// selects the modularity form `dᵀd / 2E`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmonConfig {
    pub normalized: bool,
    pub reg_weight: f64,
}

impl Default for DmonConfig {
    fn default() -> Self {
        Self {
            normalized: false,
            reg_weight: 1.0,
        }
    }
}

/// Auxiliary clustering objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AuxLoss {
    Tvgnn(TvLossConfig),
    Mincut,
    Dmon(DmonConfig),
}

impl AuxLoss {
    pub fn name(&self) -> &'static str {
        match self {
            AuxLoss::Tvgnn(_) => "tvgnn",
            AuxLoss::Mincut => "mincut",
            AuxLoss::Dmon(_) => "dmon",
        }
    }
}

/// Scalar loss with its named parts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub components: BTreeMap<String, f64>,
}

impl LossReport {
    fn with(total: f64, parts: &[(&str, f64)]) -> Self {
        Self {
            total,
            components: parts.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.components.get(name).copied()
    }

    /// Add another report's total and components into this one.
    pub fn accumulate(&mut self, other: &LossReport) {
        self.total += other.total;
        for (k, v) in &other.components {
            *self.components.entry(k.clone()).or_insert(0.0) += v;
        }
    }
}

/// The `(q+1)`-st largest entry with `q = ⌊N/(ρ+1)⌋` (clamped to `N − 1`)
/// and its position; among entries equal to that value the lowest index is
/// reported.
pub fn quant_rho(s: &[f64], rho: f64) -> Result<(f64, usize)> {
    if s.is_empty() {
        return Err(Error::EmptyVector);
    }
    if !(rho >= 0.0) {
        return Err(Error::InvalidConfig(format!("rho must be nonnegative, got {rho}")));
    }
    let n = s.len();
    let q = ((n as f64 / (rho + 1.0)).floor() as usize).min(n - 1);
    let mut sorted = s.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let value = sorted[q];
    let idx = s.iter().position(|&v| v == value).expect("value taken from s");
    Ok((value, idx))
}

/// Quantile value and row per column of `s`.
pub fn column_quantiles(s: &Tensor, rho: f64) -> Result<Vec<(f64, usize)>> {
    let (n, k) = s.require_matrix("column quantiles")?;
    if n == 0 || k == 0 {
        return Err(Error::EmptyAssignment);
    }
    let mut col = vec![0.0; n];
    (0..k)
        .map(|c| {
            for (r, v) in col.iter_mut().enumerate() {
                *v = s.get(r, c);
            }
            quant_rho(&col, rho)
        })
        .collect()
}

fn check_assignment(g: &Graph, tape: &Tape, s: NodeId) -> Result<(usize, usize)> {
    let (n, k) = tape.value(s).require_matrix("assignment")?;
    if n != g.n_vertices() {
        return Err(Error::DimensionMismatch(format!(
            "assignment has {n} rows for {} vertices",
            g.n_vertices()
        )));
    }
    Ok((n, k))
}

/// `Σ_{i<j} a_ij Σ_k |s_ik − s_jk|`.
pub fn gtv_loss_raw(tape: &mut Tape, g: &Graph, s: NodeId) -> Result<NodeId> {
    let (_, k) = check_assignment(g, tape, s)?;
    let edges = g.undirected_edges();
    if edges.is_empty() {
        let zero = tape.scale(s, 0.0)?;
        return tape.sum(zero);
    }
    let src: Arc<[usize]> = edges.iter().map(|e| e.0).collect();
    let dst: Arc<[usize]> = edges.iter().map(|e| e.1).collect();
    let left = tape.row_gather(s, src)?;
    let right = tape.row_gather(s, dst)?;
    let diff = tape.sub(left, right)?;
    let mut terms = tape.abs(diff)?;
    if edges.iter().any(|e| e.2 != 1.0) {
        let weights = edges.iter().flat_map(|e| std::iter::repeat_n(e.2, k)).collect();
        let w = tape.constant(Tensor::matrix(edges.len(), k, weights));
        terms = tape.mul(terms, w)?;
    }
    tape.sum(terms)
}

/// `Σ_k ‖s_:k − quant_ρ(s_:k)‖_{1,ρ}` with the quantile selected from the
/// current value of `s`.
pub fn an_loss_raw(tape: &mut Tape, s: NodeId, rho: f64, mode: QuantileGradient) -> Result<NodeId> {
    let quantiles = column_quantiles(tape.value(s), rho)?;
    an_loss_raw_fixed(tape, s, rho, &quantiles, mode)
}

/// Balance term against a given per-column `(value, row)` selection.
///
/// In frozen mode the stored values are used as constants; in routed mode
/// the quantile is read from `s` at the stored rows. The selected entry
/// itself contributes nothing.
pub fn an_loss_raw_fixed(
    tape: &mut Tape,
    s: NodeId,
    rho: f64,
    quantiles: &[(f64, usize)],
    mode: QuantileGradient,
) -> Result<NodeId> {
    let (n, k) = tape.value(s).require_matrix("asymmetric norm")?;
    if n == 0 || k == 0 {
        return Err(Error::EmptyAssignment);
    }
    if quantiles.len() != k || quantiles.iter().any(|q| q.1 >= n) {
        return Err(Error::DimensionMismatch(format!("{} quantiles for {n}x{k} assignment", quantiles.len())));
    }
    let mut mask = Tensor::filled(&[n, k], 1.0);
    for (c, &(_, r)) in quantiles.iter().enumerate() {
        mask.set(r, c, 0.0);
    }
    let reference = match mode {
        QuantileGradient::Frozen => {
            let mut q = Tensor::zeros(&[n, k]);
            for r in 0..n {
                for (c, &(v, _)) in quantiles.iter().enumerate() {
                    q.set(r, c, v);
                }
            }
            tape.constant(q)
        }
        QuantileGradient::Routed => {
            let mut pick = Tensor::zeros(&[n, k]);
            for (c, &(_, r)) in quantiles.iter().enumerate() {
                pick.set(r, c, 1.0);
            }
            let pick = tape.constant(pick);
            let picked = tape.mul(s, pick)?;
            let row = tape.sum_axis(picked, Axis::Rows)?;
            let ones = tape.constant(Tensor::filled(&[n, 1], 1.0));
            tape.matmul(ones, row)?
        }
    };
    let residual = tape.sub(s, reference)?;
    let norm = tape.asym_abs(residual, rho)?;
    let mask = tape.constant(mask);
    let kept = tape.mul(norm, mask)?;
    tape.sum(kept)
}

/// Value of the balance term without a tape.
pub fn an_loss_value(s: &Tensor, rho: f64) -> Result<f64> {
    let quantiles = column_quantiles(s, rho)?;
    let (n, _) = s.require_matrix("asymmetric norm")?;
    Ok(quantiles
        .iter()
        .enumerate()
        .map(|(c, &(q, _))| (0..n).map(|r| asym_abs(s.get(r, c) - q, rho)).sum::<f64>())
        .sum())
}

/// Largest attainable balance term for simplex rows: `Nρ` when `ρ = K − 1`,
/// otherwise `Nρ·min(1, K/(ρ+1))`.
pub fn beta(n: usize, k: usize, rho: f64) -> f64 {
    let base = n as f64 * rho;
    if rho == (k - 1) as f64 {
        base
    } else {
        base * (k as f64 / (rho + 1.0)).min(1.0)
    }
}

/// `α1·L*_GTV/(2E) + α2·(β − L*_AN)/β`.
pub fn tvgnn_loss(tape: &mut Tape, g: &Graph, s: NodeId, cfg: &TvLossConfig) -> Result<(NodeId, LossReport)> {
    let (_, k) = check_assignment(g, tape, s)?;
    let rho = cfg.rho_for(k);
    let quantiles = column_quantiles(tape.value(s), rho)?;
    tvgnn_loss_fixed(tape, g, s, cfg, &quantiles)
}

/// [`tvgnn_loss`] with a given quantile selection.
pub fn tvgnn_loss_fixed(
    tape: &mut Tape,
    g: &Graph,
    s: NodeId,
    cfg: &TvLossConfig,
    quantiles: &[(f64, usize)],
) -> Result<(NodeId, LossReport)> {
    let (n, k) = check_assignment(g, tape, s)?;
    cfg.validate(k)?;
    let e = g.n_edges();
    if e == 0 {
        return Err(Error::EmptyGraph);
    }
    let rho = cfg.rho_for(k);
    let b = beta(n, k, rho);

    let gtv_raw = gtv_loss_raw(tape, g, s)?;
    let gtv = tape.div_const(gtv_raw, 2.0 * e as f64)?;
    let an_raw = an_loss_raw_fixed(tape, s, rho, quantiles, cfg.quantile_gradient)?;
    let an_frac = tape.div_const(an_raw, b)?;
    let one = tape.constant(Tensor::scalar(1.0));
    let an = tape.sub(one, an_frac)?;

    let gtv_w = tape.scale(gtv, cfg.alpha1)?;
    let an_w = tape.scale(an, cfg.alpha2)?;
    let total = tape.add(gtv_w, an_w)?;
    let report = LossReport::with(
        tape.value(total).item(),
        &[("gtv", tape.value(gtv).item()), ("an", tape.value(an).item())],
    );
    Ok((total, report))
}

/// `−Tr(SᵀÃS)/Tr(SᵀD̃S) + ‖SᵀS/‖SᵀS‖_F − I/√K‖_F`.
pub fn mincut_loss(tape: &mut Tape, g: &Graph, s: NodeId) -> Result<(NodeId, LossReport)> {
    let (_, k) = check_assignment(g, tape, s)?;
    let a_norm = sym_norm_adjacency(g)?;
    let degree = CsrMatrix::diagonal(&a_norm.row_sums());

    let a_s = tape.sparse_matmul(Arc::new(a_norm), s)?;
    let num_terms = tape.mul(s, a_s)?;
    let num = tape.sum(num_terms)?;
    let d_s = tape.sparse_matmul(Arc::new(degree), s)?;
    let den_terms = tape.mul(s, d_s)?;
    let den = tape.sum(den_terms)?;
    let ratio = tape.div(num, den)?;
    let cut = tape.scale(ratio, -1.0)?;

    let st = tape.transpose(s)?;
    let sts = tape.matmul(st, s)?;
    let norm = tape.frobenius(sts)?;
    let unit = tape.div(sts, norm)?;
    let target = tape.constant(Tensor::identity(k).map(|v| v / (k as f64).sqrt()));
    let gap = tape.sub(unit, target)?;
    let ortho = tape.frobenius(gap)?;

    let total = tape.add(cut, ortho)?;
    let report = LossReport::with(
        tape.value(total).item(),
        &[("mincut_cut", tape.value(cut).item()), ("mincut_ortho", tape.value(ortho).item())],
    );
    Ok((total, report))
}

/// `−Tr(SᵀAS − (dS)ᵀ(dS))/2E + w·((√K/N)‖Σ_i s_i‖_F − 1)`.
pub fn dmon_loss(tape: &mut Tape, g: &Graph, s: NodeId, cfg: &DmonConfig) -> Result<(NodeId, LossReport)> {
    let (n, k) = check_assignment(g, tape, s)?;
    let e = g.n_edges();
    if e == 0 {
        return Err(Error::EmptyGraph);
    }
    let two_e = 2.0 * e as f64;

    let a_s = tape.sparse_matmul(Arc::new(g.adjacency().clone()), s)?;
    let within_terms = tape.mul(s, a_s)?;
    let within = tape.sum(within_terms)?;
    let d = tape.constant(Tensor::matrix(1, n, g.degrees()));
    let d_s = tape.matmul(d, s)?;
    let sq = tape.mul(d_s, d_s)?;
    let mut expected = tape.sum(sq)?;
    if cfg.normalized {
        expected = tape.div_const(expected, two_e)?;
    }
    let diff = tape.sub(within, expected)?;
    let modularity = tape.scale(diff, -1.0 / two_e)?;

    let sizes = tape.sum_axis(s, Axis::Rows)?;
    let size_norm = tape.frobenius(sizes)?;
    let scaled = tape.scale(size_norm, (k as f64).sqrt() / n as f64)?;
    let one = tape.constant(Tensor::scalar(1.0));
    let reg = tape.sub(scaled, one)?;

    let reg_w = tape.scale(reg, cfg.reg_weight)?;
    let total = tape.add(modularity, reg_w)?;
    let report = LossReport::with(
        tape.value(total).item(),
        &[("dmon_mod", tape.value(modularity).item()), ("dmon_reg", tape.value(reg).item())],
    );
    Ok((total, report))
}

/// Negative log-likelihood of `softmax(logits)` at `label` for `1×C` logits.
pub fn cross_entropy_loss(tape: &mut Tape, logits: NodeId, label: usize) -> Result<(NodeId, LossReport)> {
    let (rows, classes) = tape.value(logits).require_matrix("cross-entropy")?;
    if rows != 1 {
        return Err(Error::DimensionMismatch(format!("expected 1 row of logits, got {rows}")));
    }
    if label >= classes {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    let loss = tape.softmax_cross_entropy(logits, Arc::from(vec![label]))?;
    let v = tape.value(loss).item();
    Ok((loss, LossReport::with(v, &[("cross_entropy", v)])))
}

/// Dispatch to the selected auxiliary objective.
pub fn aux_loss(tape: &mut Tape, g: &Graph, s: NodeId, which: &AuxLoss) -> Result<(NodeId, LossReport)> {
    match which {
        AuxLoss::Tvgnn(cfg) => tvgnn_loss(tape, g, s, cfg),
        AuxLoss::Mincut => mincut_loss(tape, g, s),
        AuxLoss::Dmon(cfg) => dmon_loss(tape, g, s, cfg),
    }
}
