//! Partition quality scores and assignment diagnostics.

mod export;
mod hungarian;

pub use export::{matrix_csv, pgm_bytes, write_pgm, LOG_FLOOR};
pub use hungarian::kuhn_munkres;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Hard cluster per vertex; ties go to the lowest cluster index.
pub fn argmax_partition(s: &Tensor) -> Vec<usize> {
    (0..s.rows())
        .map(|r| {
            let row = s.row(r);
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

fn check_lengths(a: &[usize], b: &[usize]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

/// Terms are summed in ascending count order so the result does not depend
/// on how the blocks are named.
fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    let mut counts: Vec<usize> = counts.collect();
    counts.sort_unstable();
    counts
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information `I(a;b) / ((H(a) + H(b))/2)`; 0 when
/// either partition has a single block.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    check_lengths(a, b)?;
    if a.is_empty() {
        return Ok(0.0);
    }
    let n = a.len() as f64;
    let mut ca: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cb: BTreeMap<usize, usize> = BTreeMap::new();
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *ca.entry(x).or_default() += 1;
        *cb.entry(y).or_default() += 1;
        *joint.entry((x, y)).or_default() += 1;
    }
    let ha = entropy(ca.values().copied(), n);
    let hb = entropy(cb.values().copied(), n);
    if ca.len() < 2 || cb.len() < 2 {
        return Ok(0.0);
    }
    let mut terms: Vec<f64> = joint
        .iter()
        .map(|(&(x, y), &c)| {
            let p = c as f64 / n;
            let px = ca[&x] as f64 / n;
            let py = cb[&y] as f64 / n;
            p * (p / (px * py)).ln()
        })
        .collect();
    terms.sort_by(f64::total_cmp);
    let mi: f64 = terms.iter().sum();
    Ok((2.0 * mi / (ha + hb)).clamp(0.0, 1.0))
}

/// Square count matrix `confusion[cluster][class]` padded to the larger of
/// the two label ranges.
pub fn confusion_matrix(labels: &[usize], clusters: &[usize]) -> Result<Vec<Vec<i64>>> {
    check_lengths(labels, clusters)?;
    let size = labels.iter().chain(clusters).max().map_or(0, |m| m + 1);
    let mut m = vec![vec![0i64; size]; size];
    for (&l, &c) in labels.iter().zip(clusters) {
        m[c][l] += 1;
    }
    Ok(m)
}

/// Fraction of vertices whose cluster maps to their class under the best
/// one-to-one matching.
pub fn accuracy(labels: &[usize], clusters: &[usize]) -> Result<f64> {
    let m = confusion_matrix(labels, clusters)?;
    if labels.is_empty() {
        return Ok(0.0);
    }
    let perm = kuhn_munkres(&m)?;
    let matched: i64 = perm.iter().enumerate().map(|(r, &c)| m[r][c]).sum();
    Ok(matched as f64 / labels.len() as f64)
}

/// Per-cluster cut weights and the asymmetric Cheeger ratio
/// `Σ_k cut_k / min{(K−1)|C_k|, |C̄_k|}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutReport {
    pub cuts: Vec<f64>,
    pub sizes: Vec<usize>,
    /// `+∞` when some cluster or its complement is empty.
    #[serde(serialize_with = "serialize_ratio", deserialize_with = "deserialize_ratio")]
    pub ratio: f64,
    pub degenerate: bool,
}

fn serialize_ratio<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str("inf")
    }
}

fn deserialize_ratio<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Ratio {
        Num(f64),
        Text(String),
    }
    match Ratio::deserialize(d)? {
        Ratio::Num(v) => Ok(v),
        Ratio::Text(t) if t == "inf" => Ok(f64::INFINITY),
        Ratio::Text(t) => Err(serde::de::Error::custom(format!("bad ratio {t:?}"))),
    }
}

pub fn cut_value(g: &Graph, p: &[usize], k: usize) -> Result<CutReport> {
    if p.len() != g.n_vertices() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: g.n_vertices(),
        });
    }
    if let Some(&bad) = p.iter().find(|&&c| c >= k) {
        return Err(Error::LabelOutOfRange { label: bad, classes: k });
    }
    let mut cuts = vec![0.0; k];
    for (i, j, w) in g.undirected_edges() {
        if p[i] != p[j] {
            cuts[p[i]] += w;
            cuts[p[j]] += w;
        }
    }
    let mut sizes = vec![0usize; k];
    for &c in p {
        sizes[c] += 1;
    }
    let n = p.len();
    let mut ratio = 0.0;
    let mut degenerate = false;
    for c in 0..k {
        let balance = ((k - 1) * sizes[c]).min(n - sizes[c]);
        if balance == 0 {
            degenerate = true;
        } else {
            ratio += cuts[c] / balance as f64;
        }
    }
    if degenerate {
        ratio = f64::INFINITY;
    }
    Ok(CutReport {
        cuts,
        sizes,
        ratio,
        degenerate,
    })
}

/// `ln(max(S Sᵀ, floor))` with rows and columns ordered by ascending `order`
/// (stable, so equal keys keep vertex order).
pub fn sharpness_matrix(s: &Tensor, order: &[usize]) -> Result<Tensor> {
    let n = s.rows();
    if order.len() != n {
        return Err(Error::LengthMismatch {
            left: order.len(),
            right: n,
        });
    }
    let perm = argsort(order);
    let mut out = vec![0.0; n * n];
    for (a, &i) in perm.iter().enumerate() {
        for (b, &j) in perm.iter().enumerate() {
            let dot: f64 = s.row(i).iter().zip(s.row(j)).map(|(x, y)| x * y).sum();
            out[a * n + b] = dot.max(LOG_FLOOR).ln();
        }
    }
    Ok(Tensor::matrix(n, n, out))
}

fn argsort(keys: &[usize]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by_key(|&i| keys[i]);
    idx
}

/// Ordering of a max-assignment profile.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProfileOrder {
    /// Vertex id order, e.g. position along a ring.
    Vertex,
    /// Values sorted ascending.
    Ascending,
    /// Vertices ordered by a partition (stable).
    Partition(Vec<usize>),
}

/// `max_k s_ik` per vertex.
pub fn max_assignment_profile(s: &Tensor, order: &ProfileOrder) -> Result<Vec<f64>> {
    let raw: Vec<f64> = (0..s.rows())
        .map(|r| s.row(r).iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    Ok(match order {
        ProfileOrder::Vertex => raw,
        ProfileOrder::Ascending => {
            let mut v = raw;
            v.sort_by(f64::total_cmp);
            v
        }
        ProfileOrder::Partition(p) => {
            if p.len() != raw.len() {
                return Err(Error::LengthMismatch {
                    left: p.len(),
                    right: raw.len(),
                });
            }
            argsort(p).into_iter().map(|i| raw[i]).collect()
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Balance {
    pub sizes: Vec<usize>,
    /// Entropy of the size distribution divided by `ln K`.
    pub entropy: f64,
}

pub fn cluster_balance(p: &[usize], k: usize) -> Balance {
    let mut sizes = vec![0; k];
    for &c in p {
        if c < k {
            sizes[c] += 1;
        }
    }
    let n = p.len() as f64;
    let entropy = if k < 2 || p.is_empty() {
        0.0
    } else {
        entropy(sizes.iter().copied(), n) / (k as f64).ln()
    };
    Balance { sizes, entropy }
}

/// Every cluster occupies one contiguous arc when vertices `0..N` are read
/// around a cycle.
pub fn ring_contiguous(p: &[usize]) -> bool {
    let n = p.len();
    if n == 0 {
        return true;
    }
    let boundaries = (0..n).filter(|&i| p[i] != p[(i + 1) % n]).count();
    let mut distinct = p.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() == 1 {
        return true;
    }
    boundaries == distinct.len()
}

/// Number of clusters with at least one vertex.
pub fn non_empty_clusters(p: &[usize]) -> usize {
    let mut d = p.to_vec();
    d.sort_unstable();
    d.dedup();
    d.len()
}
