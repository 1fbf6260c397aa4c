use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use tvgnn::autodiff::Tensor;
use tvgnn::graph::{read_edge_list, read_labels, Graph};
use tvgnn::metrics::{accuracy, cluster_balance, cut_value, nmi};

use crate::common::{num, write_json};
use crate::config::Settings;
use crate::error::{CliError, CliResult};

/// Hard clusters and the soft column count from an `assignments.csv`, or
/// hard clusters from a one-per-line file.
fn read_assignments(path: &Path) -> CliResult<(Vec<usize>, Option<usize>)> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let Some(first) = lines.clone().next() else {
        return Ok((Vec::new(), None));
    };
    if !first.starts_with("vertex") {
        return Ok((read_labels(path)?, None));
    }
    let width = first.split(',').count().saturating_sub(2);
    lines.next();
    let mut clusters = Vec::new();
    for (i, line) in lines.enumerate() {
        let field = line.split(',').nth(1).unwrap_or("");
        let c = field
            .trim()
            .parse::<usize>()
            .map_err(|e| CliError::usage(format!("{}: row {}: cluster {field:?}: {e}", path.display(), i + 2)))?;
        clusters.push(c);
    }
    Ok((clusters, Some(width)))
}

pub fn run(s: &Settings) -> CliResult<()> {
    s.check_task("eval")?;
    let assign_path: PathBuf = s.require("assignments")?;
    let label_path: PathBuf = s.require("labels")?;
    let (p, width) = read_assignments(&assign_path)?;
    let labels = read_labels(&label_path)?;
    let k: usize = match s.get("k")? {
        Some(k) => k,
        None => width.unwrap_or_else(|| p.iter().max().map_or(1, |m| m + 1)),
    };

    let mut report = json!({
        "vertices": p.len(),
        "k": k,
        "nmi": num(nmi(&labels, &p)?),
        "acc": num(accuracy(&labels, &p)?),
    });
    let balance = cluster_balance(&p, k);
    report["balance"] = json!({"sizes": balance.sizes, "entropy": num(balance.entropy)});
    if let Some(edge_path) = s.get::<PathBuf>("edges")? {
        let n = p.len();
        let g = Graph::from_edges(n, &read_edge_list(&edge_path)?, Tensor::zeros(&[n, 1]))?;
        let cut = cut_value(&g, &p, k)?;
        report["cut_ratio"] = num(cut.ratio);
        report["cuts"] = Value::Array(cut.cuts.iter().map(|&c| num(c)).collect());
    }
    println!("{}", serde_json::to_string_pretty(&report).expect("json"));
    if let Some(out) = s.get::<PathBuf>("out")? {
        write_json(&out, &report)?;
    }
    Ok(())
}
