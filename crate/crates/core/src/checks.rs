//! Finite-difference audit of every differentiable primitive, layer and loss.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::autodiff::{grad_check_scaled, Axis, NodeId, Tape, Tensor};
use crate::error::{Error, Result};
use crate::graph::{sym_norm_with_self_loops, Graph};
use crate::layers::{
    gcn_forward_with, gtvconv_forward_with_gamma, layer_gamma, mlp_assign, Activation, GtvConvParams, GtvVariant,
    MlpParams,
};
use crate::losses::{
    column_quantiles, cross_entropy_loss, dmon_loss, mincut_loss, tvgnn_loss_fixed, DmonConfig, QuantileGradient,
    TvLossConfig,
};
use crate::rng::{prng_stream, Prng};

/// Largest accepted `|analytic − fd| / max(1, |fd|)`.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Redraws allowed per point when it lands near a kink.
const MAX_RESAMPLES: usize = 50;

/// Analytic gradients of a faulted op are scaled by this factor.
const FAULT_SCALE: f64 = 1.5;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub points: usize,
    pub h: f64,
    pub seed: u64,
    /// Corrupt the analytic gradient of this op, to exercise failure reporting.
    pub fault: Option<String>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            points: 100,
            h: 1e-5,
            seed: 0,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpResult {
    pub op: &'static str,
    pub max_rel_error: f64,
    pub points: usize,
    /// Points redrawn because an input sat within the kink radius.
    pub resampled: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub h: f64,
    pub tolerance: f64,
    pub results: Vec<OpResult>,
}

impl SuiteReport {
    pub fn failures(&self) -> Vec<&OpResult> {
        self.results.iter().filter(|r| !(r.max_rel_error <= self.tolerance)).collect()
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }
}

type Eval = Box<dyn Fn(&mut Tape, &[NodeId]) -> Result<NodeId>>;

struct Point {
    params: Vec<Tensor>,
    eval: Eval,
}

type Builder = fn(&mut Prng) -> Point;

fn uniform(rng: &mut Prng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect())
}

fn normal_ish(rng: &mut Prng, rows: usize, cols: usize) -> Tensor {
    uniform(rng, rows, cols, -1.5, 1.5)
}

/// Nonzero magnitudes in `[lo, hi)` with random signs.
fn signed(rng: &mut Prng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let v = rng.random_range(lo..hi);
            if rng.random::<bool>() {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::matrix(rows, cols, data)
}

/// Reduce a node to a scalar through fixed random weights.
fn contract(tape: &mut Tape, out: NodeId, weights: &Tensor) -> Result<NodeId> {
    let w = tape.constant(weights.clone());
    let prod = tape.mul(out, w)?;
    tape.sum(prod)
}

fn unary_point(rng: &mut Prng, x: Tensor, op: fn(&mut Tape, NodeId) -> Result<NodeId>) -> Point {
    let w = normal_ish(rng, x.rows(), x.cols());
    Point {
        params: vec![x],
        eval: Box::new(move |t, p| {
            let y = op(t, p[0])?;
            contract(t, y, &w)
        }),
    }
}

fn binary_point(rng: &mut Prng, a: Tensor, b: Tensor, op: fn(&mut Tape, NodeId, NodeId) -> Result<NodeId>) -> Point {
    let mut probe = Tape::new();
    let (pa, pb) = (probe.constant(a.clone()), probe.constant(b.clone()));
    let out = op(&mut probe, pa, pb).expect("compatible operands");
    let w = normal_ish(rng, probe.value(out).rows(), probe.value(out).cols());
    Point {
        params: vec![a, b],
        eval: Box::new(move |t, p| {
            let y = op(t, p[0], p[1])?;
            contract(t, y, &w)
        }),
    }
}

/// Random connected graph: spanning tree plus extra edges.
fn random_graph(rng: &mut Prng, n: usize, f: usize, weighted: bool) -> Graph {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    let weight = |rng: &mut Prng| if weighted { rng.random_range(0.5..2.0) } else { 1.0 };
    for i in 1..n {
        let parent = order[rng.random_range(0..i)];
        edges.push((order[i], parent, weight(rng)));
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < 0.25 && !edges.iter().any(|e| (e.0 == i && e.1 == j) || (e.0 == j && e.1 == i)) {
                edges.push((i, j, weight(rng)));
            }
        }
    }
    let x = normal_ish(rng, n, f);
    Graph::from_edges(n, &edges, x).expect("valid random graph")
}

fn softmax_rows(t: &Tensor) -> Tensor {
    let mut out = t.clone();
    for r in 0..t.rows() {
        let row = t.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = row.iter().map(|v| (v - max).exp()).sum();
        for c in 0..t.cols() {
            out.set(r, c, (row[c] - max).exp() / total);
        }
    }
    out
}

fn tvgnn_point(rng: &mut Prng, mode: QuantileGradient) -> Point {
    let n = rng.random_range(6..=10);
    let k = rng.random_range(2..=4);
    let weighted = rng.random::<bool>();
    let g = random_graph(rng, n, 1, weighted);
    let logits = normal_ish(rng, n, k);
    let cfg = TvLossConfig {
        rho: Some(rng.random_range(1.0..=(k as f64 - 1.0))),
        alpha1: rng.random_range(0.2..1.0),
        alpha2: rng.random_range(0.2..1.0),
        quantile_gradient: mode,
    };
    let rho = cfg.rho_for(k);
    let quantiles = column_quantiles(&softmax_rows(&logits), rho).expect("non-empty");
    Point {
        params: vec![logits],
        eval: Box::new(move |t, p| {
            let s = t.row_softmax(p[0])?;
            Ok(tvgnn_loss_fixed(t, &g, s, &cfg, &quantiles)?.0)
        }),
    }
}

fn assignment_loss_point(rng: &mut Prng, loss: fn(&mut Tape, &Graph, NodeId) -> Result<NodeId>) -> Point {
    let n = rng.random_range(5..=9);
    let k = rng.random_range(2..=4);
    let weighted = rng.random::<bool>();
    let g = random_graph(rng, n, 1, weighted);
    Point {
        params: vec![normal_ish(rng, n, k)],
        eval: Box::new(move |t, p| {
            let s = t.row_softmax(p[0])?;
            loss(t, &g, s)
        }),
    }
}

fn gtvconv_point(rng: &mut Prng, variant: GtvVariant) -> Point {
    let n = rng.random_range(4..=8);
    let f_in = rng.random_range(1..=3);
    let f_out = rng.random_range(1..=4);
    let g = random_graph(rng, n, f_in, false);
    let x = g.features().clone();
    let params = GtvConvParams {
        delta: rng.random_range(0.01..0.2),
        epsilon: 1e-3,
        activation: Activation::Elu,
        variant,
    };
    let gamma = layer_gamma(&g, &x, &params).expect("connected graph");
    let w = normal_ish(rng, n, f_out);
    Point {
        params: vec![x, normal_ish(rng, f_in, f_out)],
        eval: Box::new(move |t, p| {
            let y = gtvconv_forward_with_gamma(t, &g, &gamma, p[0], p[1], &params)?;
            contract(t, y, &w)
        }),
    }
}

fn cases() -> Vec<(&'static str, Builder)> {
    vec![
        ("matmul", |rng| {
            let (a, b) = (normal_ish(rng, 3, 4), normal_ish(rng, 4, 2));
            binary_point(rng, a, b, Tape::matmul)
        }),
        ("add", |rng| {
            let (a, b) = (normal_ish(rng, 3, 3), normal_ish(rng, 3, 3));
            binary_point(rng, a, b, Tape::add)
        }),
        ("add_scalar", |rng| {
            let (a, b) = (normal_ish(rng, 1, 1), normal_ish(rng, 3, 2));
            let a = Tensor::scalar(a.item());
            binary_point(rng, a, b, Tape::add)
        }),
        ("sub", |rng| {
            let (a, b) = (normal_ish(rng, 3, 3), normal_ish(rng, 3, 3));
            binary_point(rng, a, b, Tape::sub)
        }),
        ("mul", |rng| {
            let (a, b) = (normal_ish(rng, 3, 3), normal_ish(rng, 3, 3));
            binary_point(rng, a, b, Tape::mul)
        }),
        ("mul_scalar", |rng| {
            let (a, b) = (normal_ish(rng, 3, 2), normal_ish(rng, 1, 1));
            let b = Tensor::scalar(b.item());
            binary_point(rng, a, b, Tape::mul)
        }),
        ("div", |rng| {
            let (a, b) = (normal_ish(rng, 3, 3), signed(rng, 3, 3, 0.5, 2.0));
            binary_point(rng, a, b, Tape::div)
        }),
        ("scale", |rng| {
            let x = normal_ish(rng, 3, 3);
            unary_point(rng, x, |t, a| t.scale(a, -1.7))
        }),
        ("div_const", |rng| {
            let x = normal_ish(rng, 3, 3);
            unary_point(rng, x, |t, a| t.div_const(a, 3.3))
        }),
        ("transpose", |rng| {
            let x = normal_ish(rng, 3, 2);
            let w = normal_ish(rng, 2, 3);
            Point {
                params: vec![x],
                eval: Box::new(move |t, p| {
                    let y = t.transpose(p[0])?;
                    contract(t, y, &w)
                }),
            }
        }),
        ("abs", |rng| {
            let x = normal_ish(rng, 3, 3);
            unary_point(rng, x, Tape::abs)
        }),
        ("relu", |rng| {
            let x = normal_ish(rng, 3, 3);
            unary_point(rng, x, Tape::relu)
        }),
        ("elu", |rng| {
            let x = normal_ish(rng, 3, 3);
            unary_point(rng, x, Tape::elu)
        }),
        ("log", |rng| {
            let x = uniform(rng, 3, 3, 0.3, 3.0);
            unary_point(rng, x, Tape::log)
        }),
        ("asym_abs", |rng| {
            let x = normal_ish(rng, 3, 3);
            unary_point(rng, x, |t, a| t.asym_abs(a, 2.5))
        }),
        ("row_softmax", |rng| {
            let x = normal_ish(rng, 4, 3);
            unary_point(rng, x, Tape::row_softmax)
        }),
        ("sum", |rng| {
            let x = normal_ish(rng, 3, 4);
            Point {
                params: vec![x],
                eval: Box::new(|t, p| {
                    let sq = t.mul(p[0], p[0])?;
                    t.sum(sq)
                }),
            }
        }),
        ("sum_rows", |rng| {
            let x = normal_ish(rng, 4, 3);
            let w = normal_ish(rng, 1, 3);
            Point {
                params: vec![x],
                eval: Box::new(move |t, p| {
                    let y = t.sum_axis(p[0], Axis::Rows)?;
                    contract(t, y, &w)
                }),
            }
        }),
        ("sum_cols", |rng| {
            let x = normal_ish(rng, 4, 3);
            let w = normal_ish(rng, 4, 1);
            Point {
                params: vec![x],
                eval: Box::new(move |t, p| {
                    let y = t.sum_axis(p[0], Axis::Cols)?;
                    contract(t, y, &w)
                }),
            }
        }),
        ("trace", |rng| {
            let x = normal_ish(rng, 4, 4);
            Point {
                params: vec![x],
                eval: Box::new(|t, p| {
                    let sq = t.matmul(p[0], p[0])?;
                    t.trace(sq)
                }),
            }
        }),
        ("frobenius", |rng| {
            let x = normal_ish(rng, 3, 4);
            Point {
                params: vec![x],
                eval: Box::new(|t, p| t.frobenius(p[0])),
            }
        }),
        ("sparse_matmul", |rng| {
            let g = random_graph(rng, 6, 1, true);
            let m = Arc::new(g.adjacency().clone());
            let x = normal_ish(rng, 6, 3);
            let w = normal_ish(rng, 6, 3);
            Point {
                params: vec![x],
                eval: Box::new(move |t, p| {
                    let y = t.sparse_matmul(m.clone(), p[0])?;
                    contract(t, y, &w)
                }),
            }
        }),
        ("row_gather", |rng| {
            let x = normal_ish(rng, 4, 3);
            let index: Arc<[usize]> = (0..7).map(|_| rng.random_range(0..4)).collect();
            let w = normal_ish(rng, 7, 3);
            Point {
                params: vec![x],
                eval: Box::new(move |t, p| {
                    let y = t.row_gather(p[0], index.clone())?;
                    contract(t, y, &w)
                }),
            }
        }),
        ("softmax_cross_entropy", |rng| {
            let x = normal_ish(rng, 4, 3);
            let labels: Arc<[usize]> = (0..4).map(|_| rng.random_range(0..3)).collect();
            Point {
                params: vec![x],
                eval: Box::new(move |t, p| t.softmax_cross_entropy(p[0], labels.clone())),
            }
        }),
        ("gtvconv", |rng| gtvconv_point(rng, GtvVariant::Simplified)),
        ("gtvconv_weighted", |rng| gtvconv_point(rng, GtvVariant::DegreeWeighted)),
        ("gcn", |rng| {
            let g = random_graph(rng, 6, 3, false);
            let prop = Arc::new(sym_norm_with_self_loops(&g));
            let x = g.features().clone();
            let w = normal_ish(rng, 6, 2);
            Point {
                params: vec![x, normal_ish(rng, 3, 2)],
                eval: Box::new(move |t, p| {
                    let y = gcn_forward_with(t, &g, &prop, p[0], p[1], Activation::Elu)?;
                    contract(t, y, &w)
                }),
            }
        }),
        ("mlp_assign", |rng| {
            let mlp = MlpParams {
                hidden: vec![4],
                activation: Activation::Relu,
                k: 3,
            };
            let w = normal_ish(rng, 5, 3);
            Point {
                params: vec![
                    normal_ish(rng, 5, 2),
                    normal_ish(rng, 2, 4),
                    normal_ish(rng, 1, 4),
                    normal_ish(rng, 4, 3),
                    normal_ish(rng, 1, 3),
                ],
                eval: Box::new(move |t, p| {
                    let s = mlp_assign(t, p[0], &[(p[1], p[2]), (p[3], p[4])], &mlp)?;
                    contract(t, s, &w)
                }),
            }
        }),
        ("loss_tvgnn", |rng| tvgnn_point(rng, QuantileGradient::Frozen)),
        ("loss_tvgnn_routed", |rng| tvgnn_point(rng, QuantileGradient::Routed)),
        ("loss_mincut", |rng| assignment_loss_point(rng, |t, g, s| Ok(mincut_loss(t, g, s)?.0))),
        ("loss_dmon", |rng| {
            assignment_loss_point(rng, |t, g, s| Ok(dmon_loss(t, g, s, &DmonConfig::default())?.0))
        }),
        ("loss_dmon_normalized", |rng| {
            assignment_loss_point(rng, |t, g, s| {
                let cfg = DmonConfig {
                    normalized: true,
                    reg_weight: 0.5,
                };
                Ok(dmon_loss(t, g, s, &cfg)?.0)
            })
        }),
        ("loss_cross_entropy", |rng| {
            let classes = rng.random_range(2..=5);
            let label = rng.random_range(0..classes);
            Point {
                params: vec![normal_ish(rng, 1, classes)],
                eval: Box::new(move |t, p| Ok(cross_entropy_loss(t, p[0], label)?.0)),
            }
        }),
    ]
}

/// Names of the audited ops, in report order.
pub fn op_names() -> Vec<&'static str> {
    cases().into_iter().map(|c| c.0).collect()
}

/// Check every op at `cfg.points` seeded points; points that fall within
/// the kink radius are redrawn.
pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    let cases = cases();
    if let Some(f) = &cfg.fault {
        if !cases.iter().any(|c| c.0 == f) {
            return Err(Error::InvalidConfig(format!("unknown op {f:?} for fault injection")));
        }
    }
    let mut results = Vec::with_capacity(cases.len());
    for (idx, (name, build)) in cases.into_iter().enumerate() {
        let mut rng = prng_stream(cfg.seed, 0x100 + idx as u64);
        let scale = if cfg.fault.as_deref() == Some(name) { FAULT_SCALE } else { 1.0 };
        let mut worst: f64 = 0.0;
        let mut resampled = 0;
        for _ in 0..cfg.points {
            let mut attempts = 0;
            loop {
                let point = build(&mut rng);
                match grad_check_scaled(&point.eval, &point.params, cfg.h, scale) {
                    Ok(r) => {
                        worst = worst.max(r.max_rel_error);
                        break;
                    }
                    Err(Error::KinkProximity { .. }) if attempts < MAX_RESAMPLES => {
                        attempts += 1;
                        resampled += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        results.push(OpResult {
            op: name,
            max_rel_error: worst,
            points: cfg.points,
            resampled,
        });
    }
    Ok(SuiteReport {
        h: cfg.h,
        tolerance: GRADCHECK_TOLERANCE,
        results,
    })
}
