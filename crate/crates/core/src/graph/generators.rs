use std::f64::consts::PI;

use rand::Rng;

use super::Graph;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::rng::{prng_stream, streams};

/// Probability of flipping each coordinate of the block one-hot in SBM features.
pub const SBM_FLIP_PROB: f64 = 0.1;
/// Uniform noise columns appended to SBM features.
pub const SBM_NOISE_COLUMNS: usize = 4;

/// Cycle on `n` vertices; vertex `i` sits at angle `2πi/n` on the unit circle.
pub fn gen_ring(n: usize) -> Result<Graph> {
    if n < 3 {
        return Err(Error::InvalidSize(format!("ring needs at least 3 vertices, got {n}")));
    }
    let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
    let mut feats = Vec::with_capacity(2 * n);
    for i in 0..n {
        let theta = 2.0 * PI * i as f64 / n as f64;
        feats.push(theta.cos());
        feats.push(theta.sin());
    }
    Graph::from_edges(n, &edges, Tensor::matrix(n, 2, feats))
}

/// 4-neighbour lattice; vertex `r·cols + c` has features `(r, c)`.
pub fn gen_grid(rows: usize, cols: usize) -> Result<Graph> {
    if rows < 2 || cols < 2 {
        return Err(Error::InvalidSize(format!("grid needs at least 2x2, got {rows}x{cols}")));
    }
    let id = |r: usize, c: usize| r * cols + c;
    let mut edges = Vec::with_capacity(2 * rows * cols);
    let mut feats = Vec::with_capacity(2 * rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.push((id(r, c), id(r, c + 1), 1.0));
            }
            if r + 1 < rows {
                edges.push((id(r, c), id(r + 1, c), 1.0));
            }
            feats.push(r as f64);
            feats.push(c as f64);
        }
    }
    Graph::from_edges(rows * cols, &edges, Tensor::matrix(rows * cols, 2, feats))
}

/// Stochastic block model with planted blocks of the given sizes.
///
/// Each pair `i < j` is linked with probability `p_in` inside a block and
/// `p_out` across blocks. Features are the block one-hot with every
/// coordinate flipped with probability [`SBM_FLIP_PROB`], followed by
/// [`SBM_NOISE_COLUMNS`] columns of U[0, 1) noise. Vertex labels are the
/// block ids. Edges and features use separate streams of the seeded PRNG.
pub fn gen_sbm(sizes: &[usize], p_in: f64, p_out: f64, seed: u64) -> Result<Graph> {
    for p in [p_in, p_out] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidProbability(p));
        }
    }
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(Error::InvalidSize(format!("block sizes must be positive, got {sizes:?}")));
    }
    let blocks: Vec<usize> = sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &s)| std::iter::repeat_n(b, s))
        .collect();
    let n = blocks.len();
    let k = sizes.len();

    let mut rng = prng_stream(seed, streams::GRAPH);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if blocks[i] == blocks[j] { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((i, j, 1.0));
            }
        }
    }

    let mut rng = prng_stream(seed, streams::FEATURES);
    let width = k + SBM_NOISE_COLUMNS;
    let mut feats = Vec::with_capacity(n * width);
    for &b in &blocks {
        for c in 0..k {
            let bit = c == b;
            let flip = rng.random::<f64>() < SBM_FLIP_PROB;
            feats.push(if bit != flip { 1.0 } else { 0.0 });
        }
        for _ in 0..SBM_NOISE_COLUMNS {
            feats.push(rng.random::<f64>());
        }
    }
    Graph::from_edges(n, &edges, Tensor::matrix(n, width, feats))?.with_vertex_labels(blocks)
}
