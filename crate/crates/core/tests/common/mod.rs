#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tvgnn::autodiff::Tensor;
use tvgnn::graph::Graph;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random spanning tree plus independent extra edges with probability `p`;
/// no pair appears twice.
pub fn random_connected_edges(rng: &mut ChaCha8Rng, n: usize, p: f64, weighted: bool) -> Vec<(usize, usize, f64)> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let weight = |rng: &mut ChaCha8Rng| if weighted { rng.random_range(0.5..2.0) } else { 1.0 };
    let mut edges = Vec::new();
    for i in 1..n {
        let parent = order[rng.random_range(0..i)];
        let w = weight(rng);
        edges.push((order[i], parent, w));
    }
    for i in 0..n {
        for j in i + 1..n {
            let exists = edges.iter().any(|e: &(usize, usize, f64)| (e.0.min(e.1), e.0.max(e.1)) == (i, j));
            if !exists && rng.random::<f64>() < p {
                let w = weight(rng);
                edges.push((i, j, w));
            }
        }
    }
    edges
}

pub fn random_features(rng: &mut ChaCha8Rng, n: usize, f: usize) -> Tensor {
    Tensor::matrix(n, f, (0..n * f).map(|_| rng.random_range(-1.0..1.0)).collect())
}

pub fn random_connected_graph(rng: &mut ChaCha8Rng, n: usize, f: usize, p: f64) -> Graph {
    let edges = random_connected_edges(rng, n, p, false);
    let x = random_features(rng, n, f);
    Graph::from_edges(n, &edges, x).unwrap()
}

/// Rows drawn uniformly from the probability simplex.
pub fn random_simplex(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Tensor {
    let mut data = Vec::with_capacity(n * k);
    for _ in 0..n {
        let e: Vec<f64> = (0..k).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
        let total: f64 = e.iter().sum();
        data.extend(e.iter().map(|v| v / total));
    }
    Tensor::matrix(n, k, data)
}
