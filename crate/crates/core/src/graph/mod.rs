//! Attributed undirected graphs.

mod generators;
mod io;

pub use generators::{gen_grid, gen_ring, gen_sbm, SBM_FLIP_PROB, SBM_NOISE_COLUMNS};
pub use io::{
    load_graph_collection, load_vertex_dataset, read_edge_list, read_features, read_labels,
    write_edge_list, write_features, write_graph_collection, write_labels,
};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Undirected weighted graph with dense vertex features.
///
/// The adjacency stores both directions of every edge, has no diagonal and
/// only nonnegative weights. The undirected edge count is `nnz / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adjacency: CsrMatrix,
    features: Tensor,
    vertex_labels: Option<Vec<usize>>,
    graph_label: Option<usize>,
}

impl Graph {
    pub fn new(adjacency: CsrMatrix, features: Tensor) -> Result<Self> {
        let n = adjacency.rows();
        if adjacency.cols() != n {
            return Err(Error::NonSquare {
                rows: n,
                cols: adjacency.cols(),
            });
        }
        let (rows, _) = features.require_matrix("graph features")?;
        if rows != n {
            return Err(Error::DimensionMismatch(format!(
                "{rows} feature rows for {n} vertices"
            )));
        }
        for r in 0..n {
            for (c, w) in adjacency.row(r) {
                if c == r {
                    return Err(Error::InvalidConfig(format!("self-loop at vertex {r}")));
                }
                if !(w >= 0.0) || !w.is_finite() {
                    return Err(Error::InvalidConfig(format!("edge ({r}, {c}) has weight {w}")));
                }
            }
        }
        if !adjacency.is_symmetric() {
            return Err(Error::AsymmetricInput);
        }
        Ok(Self {
            adjacency,
            features,
            vertex_labels: None,
            graph_label: None,
        })
    }

    /// Build from an edge list, symmetrizing by union. Self-loops are
    /// dropped; repeated pairs keep the largest weight.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)], features: Tensor) -> Result<Self> {
        let mut entries = Vec::with_capacity(edges.len() * 2);
        for &(u, v, w) in edges {
            if u >= n || v >= n {
                return Err(Error::DimensionMismatch(format!(
                    "edge ({u}, {v}) references a vertex outside 0..{n}"
                )));
            }
            if u != v {
                entries.push((u, v, w));
                entries.push((v, u, w));
            }
        }
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut dedup: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for (r, c, w) in entries {
            match dedup.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 = last.2.max(w),
                _ => dedup.push((r, c, w)),
            }
        }
        Self::new(CsrMatrix::from_triplets(n, n, dedup)?, features)
    }

    pub fn with_vertex_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.n_vertices() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} vertices",
                labels.len(),
                self.n_vertices()
            )));
        }
        self.vertex_labels = Some(labels);
        Ok(self)
    }

    pub fn with_graph_label(mut self, label: usize) -> Self {
        self.graph_label = Some(label);
        self
    }

    pub fn with_features(mut self, features: Tensor) -> Result<Self> {
        if features.rows() != self.n_vertices() || features.shape().len() != 2 {
            return Err(Error::DimensionMismatch("feature rows must equal vertex count".into()));
        }
        self.features = features;
        Ok(self)
    }

    pub fn n_vertices(&self) -> usize {
        self.adjacency.rows()
    }

    /// Undirected edge count.
    pub fn n_edges(&self) -> usize {
        self.adjacency.nnz() / 2
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adjacency
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn vertex_labels(&self) -> Option<&[usize]> {
        self.vertex_labels.as_deref()
    }

    pub fn graph_label(&self) -> Option<usize> {
        self.graph_label
    }

    pub fn degrees(&self) -> Vec<f64> {
        self.adjacency.row_sums()
    }

    /// Each undirected edge once as `(i, j, w)` with `i < j`, in row order.
    pub fn undirected_edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.n_edges());
        for i in 0..self.n_vertices() {
            for (j, w) in self.adjacency.row(i) {
                if j > i {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    /// Connected components as a component id per vertex.
    pub fn components(&self) -> Vec<usize> {
        let n = self.n_vertices();
        let mut comp = vec![usize::MAX; n];
        let mut next = 0;
        let mut stack = Vec::new();
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            comp[s] = next;
            stack.push(s);
            while let Some(v) = stack.pop() {
                for (u, _) in self.adjacency.row(v) {
                    if comp[u] == usize::MAX {
                        comp[u] = next;
                        stack.push(u);
                    }
                }
            }
            next += 1;
        }
        comp
    }

    pub fn is_connected(&self) -> bool {
        self.components().iter().all(|&c| c == 0)
    }
}

/// Labelled graphs for graph-level classification.
#[derive(Debug, Clone)]
pub struct GraphCollection {
    graphs: Vec<Graph>,
    class_count: usize,
}

impl GraphCollection {
    pub fn new(graphs: Vec<Graph>, class_count: usize) -> Result<Self> {
        if graphs.is_empty() {
            return Err(Error::EmptyCollection);
        }
        for (i, g) in graphs.iter().enumerate() {
            match g.graph_label() {
                Some(l) if l < class_count => {}
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "graph {i} has label {other:?}, expected one in 0..{class_count}"
                    )))
                }
            }
        }
        Ok(Self { graphs, class_count })
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn labels(&self) -> Vec<usize> {
        self.graphs.iter().map(|g| g.graph_label().expect("validated")).collect()
    }

    pub fn n_features(&self) -> usize {
        self.graphs[0].n_features()
    }

    pub fn mean_vertices(&self) -> f64 {
        self.graphs.iter().map(|g| g.n_vertices() as f64).sum::<f64>() / self.graphs.len() as f64
    }
}

/// `D^{-1/2} A D^{-1/2}` on the sparsity pattern of `A`.
pub fn sym_norm_adjacency(g: &Graph) -> Result<CsrMatrix> {
    sym_norm(g.adjacency())
}

/// Symmetric normalization of `A + I`, the GCN propagation matrix.
pub fn sym_norm_with_self_loops(g: &Graph) -> CsrMatrix {
    let n = g.n_vertices();
    let mut triplets: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, 1.0)).collect();
    for r in 0..n {
        triplets.extend(g.adjacency().row(r).map(|(c, w)| (r, c, w)));
    }
    let a = CsrMatrix::from_triplets(n, n, triplets).expect("indices in range");
    sym_norm(&a).expect("self-loops keep every degree positive")
}

pub(crate) fn sym_norm(a: &CsrMatrix) -> Result<CsrMatrix> {
    let deg = a.row_sums();
    if let Some(i) = deg.iter().position(|&d| d <= 0.0) {
        return Err(Error::IsolatedVertex(i));
    }
    Ok(a.map_values(|r, c, v| v / (deg[r] * deg[c]).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feats(n: usize) -> Tensor {
        Tensor::zeros(&[n, 1])
    }

    #[test]
    fn single_edge_normalizes_to_swap() {
        let g = Graph::from_edges(2, &[(0, 1, 1.0)], feats(2)).unwrap();
        let a = sym_norm_adjacency(&g).unwrap();
        assert_eq!(a.to_dense(), vec![0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn four_cycle_entries_are_half() {
        let g = gen_ring(4).unwrap();
        let a = sym_norm_adjacency(&g).unwrap();
        assert!(a.values().iter().all(|&v| v == 0.5));
        assert_eq!(a.nnz(), 8);
    }

    #[test]
    fn path_normalization() {
        let g = Graph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)], feats(3)).unwrap();
        let a = sym_norm_adjacency(&g).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert!((a.get(0, 1) - s).abs() < 1e-15);
        assert!((a.get(1, 2) - s).abs() < 1e-15);
        assert!(a.is_symmetric());
    }

    #[test]
    fn isolated_vertex_rejected() {
        let g = Graph::from_edges(3, &[(0, 1, 1.0)], feats(3)).unwrap();
        assert!(matches!(sym_norm_adjacency(&g), Err(Error::IsolatedVertex(2))));
    }

    #[test]
    fn from_edges_symmetrizes_and_keeps_max_weight() {
        let g = Graph::from_edges(3, &[(0, 1, 1.0), (1, 0, 3.0), (2, 2, 1.0), (1, 2, 0.5)], feats(3)).unwrap();
        assert_eq!(g.n_edges(), 2);
        assert_eq!(g.adjacency().get(0, 1), 3.0);
        assert_eq!(g.adjacency().get(1, 0), 3.0);
        assert_eq!(g.adjacency().get(2, 2), 0.0);
    }

    #[test]
    fn new_rejects_asymmetric_and_self_loops() {
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 1, 1.0)]).unwrap();
        assert!(matches!(Graph::new(a, feats(2)), Err(Error::AsymmetricInput)));
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1.0)]).unwrap();
        assert!(Graph::new(a, feats(2)).is_err());
    }

    #[test]
    fn gcn_propagation_single_vertex_is_one() {
        let g = Graph::from_edges(1, &[], feats(1)).unwrap();
        assert_eq!(sym_norm_with_self_loops(&g).to_dense(), vec![1.0]);
    }
}
