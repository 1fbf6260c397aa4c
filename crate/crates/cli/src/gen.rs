use std::path::{Path, PathBuf};

use serde_json::json;
use tvgnn::graph::{gen_grid, gen_ring, gen_sbm, write_edge_list, write_features, write_labels, Graph};

use crate::common::{write_file, write_json};
use crate::config::Settings;
use crate::error::{CliError, CliResult};

pub const EDGES_FILE: &str = "edges.tsv";
pub const FEATURES_FILE: &str = "features.csv";
pub const LABELS_FILE: &str = "labels.txt";
pub const MANIFEST_FILE: &str = "graph.json";

/// Graph from the generator keys (`kind` plus its parameters).
pub fn generate(s: &Settings, kind: &str) -> CliResult<(Graph, serde_json::Value)> {
    Ok(match kind {
        "ring" => {
            let n: usize = s.require("n")?;
            (gen_ring(n)?, json!({"kind": "ring", "n": n}))
        }
        "grid" => {
            let rows: usize = s.require("rows")?;
            let cols: usize = s.get_or("cols", rows)?;
            (gen_grid(rows, cols)?, json!({"kind": "grid", "rows": rows, "cols": cols}))
        }
        "sbm" => {
            let sizes: Vec<usize> = s.list("sizes")?.ok_or_else(|| CliError::usage("sbm needs --sizes"))?;
            let p_in: f64 = s.require("p_in")?;
            let p_out: f64 = s.require("p_out")?;
            let seed: u64 = match s.get("graph_seed")? {
                Some(v) => v,
                None => s.get_or("seed", 0)?,
            };
            let g = gen_sbm(&sizes, p_in, p_out, seed)?;
            (g, json!({"kind": "sbm", "sizes": sizes, "p_in": p_in, "p_out": p_out, "seed": seed}))
        }
        other => return Err(CliError::usage(format!("unknown generator {other:?}; expected ring, grid or sbm"))),
    })
}

pub fn write_graph(dir: &Path, g: &Graph, params: serde_json::Value) -> CliResult<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut buf = Vec::new();
    write_edge_list(g, &mut buf)?;
    let p = dir.join(EDGES_FILE);
    write_file(&p, &buf)?;
    written.push(p);

    buf.clear();
    write_features(g.features(), &mut buf)?;
    let p = dir.join(FEATURES_FILE);
    write_file(&p, &buf)?;
    written.push(p);

    let mut files = vec![EDGES_FILE, FEATURES_FILE];
    if let Some(labels) = g.vertex_labels() {
        buf.clear();
        write_labels(labels, &mut buf)?;
        let p = dir.join(LABELS_FILE);
        write_file(&p, &buf)?;
        written.push(p);
        files.push(LABELS_FILE);
    }
    let manifest = json!({
        "generator": params,
        "vertices": g.n_vertices(),
        "edges": g.n_edges(),
        "features": g.n_features(),
        "files": files,
    });
    let p = dir.join(MANIFEST_FILE);
    write_json(&p, &manifest)?;
    written.push(p);
    Ok(written)
}

pub fn run(s: &Settings) -> CliResult<()> {
    s.check_task("gen")?;
    let kind: String = s.require("kind")?;
    let out: PathBuf = s.require("out")?;
    let (g, params) = generate(s, &kind)?;
    let files = write_graph(&out, &g, params)?;
    println!(
        "wrote {} vertices, {} edges to {} ({} files)",
        g.n_vertices(),
        g.n_edges(),
        out.display(),
        files.len()
    );
    Ok(())
}
