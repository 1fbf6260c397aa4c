//! Plain-text graph formats.
//!
//! * edge list: one edge per line, `src<TAB>dst[<TAB>weight]`, 0-based ids,
//!   `#` starts a comment line;
//! * features: CSV without header, row `i` holds vertex `i`;
//! * labels: one integer per line;
//! * graph collections: JSON lines, one graph per line with `edges`,
//!   `features` (or `degrees_as_features: true`) and `label`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Graph, GraphCollection};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

fn location(path: &Path, line: usize) -> String {
    format!("{}:{}", path.display(), line)
}

/// Edges as listed, without symmetrization.
pub fn read_edge_list(path: &Path) -> Result<Vec<(usize, usize, f64)>> {
    let text = fs::read_to_string(path)?;
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let loc = || location(path, lineno + 1);
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(Error::parse(loc(), format!("expected 2 or 3 tab-separated fields, got {}", fields.len())));
        }
        let id = |s: &str| s.parse::<usize>().map_err(|e| Error::parse(loc(), format!("vertex id {s:?}: {e}")));
        let w = match fields.get(2) {
            Some(s) => {
                let w = s.parse::<f64>().map_err(|e| Error::parse(loc(), format!("weight {s:?}: {e}")))?;
                if !(w >= 0.0) || !w.is_finite() {
                    return Err(Error::parse(loc(), format!("weight must be finite and nonnegative, got {w}")));
                }
                w
            }
            None => 1.0,
        };
        edges.push((id(fields[0])?, id(fields[1])?, w));
    }
    Ok(edges)
}

pub fn read_features(path: &Path) -> Result<Tensor> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::parse(location(path, lineno + 1), format!("{s:?}: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{}: row {} has {} columns, expected {}",
                    path.display(),
                    lineno + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    Tensor::from_rows(&rows)
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(lineno, l)| {
            l.trim()
                .parse::<usize>()
                .map_err(|e| Error::parse(location(path, lineno + 1), format!("label {l:?}: {e}")))
        })
        .collect()
}

/// Load an attributed vertex-level dataset. Edges are symmetrized by union;
/// the vertex count is the number of feature rows.
pub fn load_vertex_dataset(edge_path: &Path, feature_path: &Path, label_path: Option<&Path>) -> Result<Graph> {
    let features = read_features(feature_path)?;
    let edges = read_edge_list(edge_path)?;
    let n = features.rows();
    if let Some(max_id) = edges.iter().map(|&(u, v, _)| u.max(v)).max() {
        if max_id >= n {
            return Err(Error::DimensionMismatch(format!(
                "edge list references vertex {max_id} but only {n} feature rows exist"
            )));
        }
    }
    let g = Graph::from_edges(n, &edges, features)?;
    match label_path {
        Some(p) => g.with_vertex_labels(read_labels(p)?),
        None => Ok(g),
    }
}

/// Canonical edge list: each undirected edge once with `src < dst`; the
/// weight column is omitted for unit weights.
pub fn write_edge_list(g: &Graph, mut out: impl Write) -> Result<()> {
    for (i, j, w) in g.undirected_edges() {
        if w == 1.0 {
            writeln!(out, "{i}\t{j}")?;
        } else {
            writeln!(out, "{i}\t{j}\t{w}")?;
        }
    }
    Ok(())
}

pub fn write_features(features: &Tensor, mut out: impl Write) -> Result<()> {
    for r in 0..features.rows() {
        let row: Vec<String> = features.row(r).iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn write_labels(labels: &[usize], mut out: impl Write) -> Result<()> {
    for l in labels {
        writeln!(out, "{l}")?;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    features: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    degrees_as_features: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_vertices: Option<usize>,
    label: i64,
}

/// Load a JSON-lines graph collection. Raw labels are remapped to
/// `0..class_count` in increasing order. With `degrees_as_features` the
/// features are one-hot vertex degrees, as wide as the largest degree in the
/// collection plus one.
pub fn load_graph_collection(path: &Path) -> Result<GraphCollection> {
    let text = fs::read_to_string(path)?;
    let mut parsed = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(line)
            .map_err(|e| Error::parse(format!("record {} ({})", parsed.len(), location(path, lineno + 1)), e.to_string()))?;
        if rec.features.is_none() && !rec.degrees_as_features {
            return Err(Error::parse(
                format!("record {}", parsed.len()),
                "needs \"features\" or \"degrees_as_features\": true",
            ));
        }
        parsed.push(rec);
    }
    if parsed.is_empty() {
        return Err(Error::EmptyCollection);
    }

    let remap: BTreeMap<i64, usize> = {
        let mut raw: Vec<i64> = parsed.iter().map(|r| r.label).collect();
        raw.sort_unstable();
        raw.dedup();
        raw.into_iter().enumerate().map(|(i, l)| (l, i)).collect()
    };

    let mut structural = Vec::with_capacity(parsed.len());
    for (idx, rec) in parsed.iter().enumerate() {
        let max_id = rec.edges.iter().map(|e| e[0].max(e[1]) + 1).max().unwrap_or(0);
        let n = match (&rec.features, rec.n_vertices) {
            (Some(f), _) => f.len(),
            (None, Some(n)) => n,
            (None, None) => max_id,
        };
        if max_id > n {
            return Err(Error::parse(format!("record {idx}"), format!("edge references vertex {} of {n}", max_id - 1)));
        }
        let edges: Vec<_> = rec.edges.iter().map(|e| (e[0], e[1], 1.0)).collect();
        let g = Graph::from_edges(n, &edges, Tensor::zeros(&[n, 0]))
            .map_err(|e| Error::parse(format!("record {idx}"), e.to_string()))?;
        structural.push(g);
    }

    let max_degree = structural
        .iter()
        .flat_map(|g| (0..g.n_vertices()).map(move |v| g.adjacency().row_nnz(v)))
        .max()
        .unwrap_or(0);

    let mut graphs = Vec::with_capacity(parsed.len());
    let mut width = None;
    for (idx, (rec, g)) in parsed.iter().zip(structural).enumerate() {
        let features = match &rec.features {
            Some(rows) => Tensor::from_rows(rows).map_err(|e| Error::parse(format!("record {idx}"), e.to_string()))?,
            None => {
                let n = g.n_vertices();
                let mut data = vec![0.0; n * (max_degree + 1)];
                for v in 0..n {
                    data[v * (max_degree + 1) + g.adjacency().row_nnz(v)] = 1.0;
                }
                Tensor::matrix(n, max_degree + 1, data)
            }
        };
        let f = features.cols();
        if *width.get_or_insert(f) != f {
            return Err(Error::parse(format!("record {idx}"), format!("feature width {f} differs from {}", width.unwrap())));
        }
        graphs.push(g.with_features(features)?.with_graph_label(remap[&rec.label]));
    }
    GraphCollection::new(graphs, remap.len())
}

/// Write a collection in the JSON-lines format with explicit features.
pub fn write_graph_collection(collection: &GraphCollection, mut out: impl Write) -> Result<()> {
    for g in collection.graphs() {
        let rec = Record {
            edges: g.undirected_edges().iter().map(|&(i, j, _)| [i, j]).collect(),
            features: Some(g.features().to_rows()),
            degrees_as_features: false,
            n_vertices: None,
            label: g.graph_label().expect("collection graphs are labelled") as i64,
        };
        serde_json::to_writer(&mut out, &rec)?;
        writeln!(out)?;
    }
    Ok(())
}
