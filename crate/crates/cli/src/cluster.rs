use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde_json::{json, Map, Value};
use tvgnn::autodiff::Tensor;
use tvgnn::graph::{load_vertex_dataset, Graph};
use tvgnn::layers::Activation;
use tvgnn::metrics::{
    accuracy, argmax_partition, cluster_balance, cut_value, max_assignment_profile, nmi, non_empty_clusters,
    pgm_bytes, ring_contiguous, sharpness_matrix, ProfileOrder,
};
use tvgnn::models::{save_checkpoint, train_cluster, ClusterArch, EpochRecord, TrainConfig};

use crate::common::{loss_from, mp_from, num, summarize, thread_pool, train_from, write_file, write_json, LossDefaults};
use crate::config::Settings;
use crate::error::{CliError, CliResult};
use crate::gen::generate;

/// Ten independent runs, as in the vertex clustering protocol.
pub const DEFAULT_SEEDS: [u64; 10] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9];
pub const DEFAULT_EPOCHS: usize = 10_000;

pub const ASSIGNMENTS_FILE: &str = "assignments.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const SHARPNESS_FILE: &str = "sharpness.pgm";
pub const PROFILE_FILE: &str = "profile.csv";
pub const HISTORY_FILE: &str = "history.csv";
pub const MODEL_FILE: &str = "model.json";
pub const SUMMARY_FILE: &str = "summary.json";

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}

/// Graph from `generator` keys, or from `edges` + `features` (+ `labels`).
fn load_graph(s: &Settings) -> CliResult<(Graph, String)> {
    if let Some(kind) = s.raw("generator") {
        let (g, _) = generate(s, kind)?;
        return Ok((g, kind.to_string()));
    }
    match (s.get::<PathBuf>("edges")?, s.get::<PathBuf>("features")?) {
        (Some(e), Some(f)) => {
            let labels = s.get::<PathBuf>("labels")?;
            Ok((load_vertex_dataset(&e, &f, labels.as_deref())?, "files".into()))
        }
        _ => Err(CliError::usage("need --generator, or --edges and --features")),
    }
}

pub fn arch_from(s: &Settings) -> CliResult<ClusterArch> {
    let d = ClusterArch::default();
    Ok(ClusterArch {
        mp: mp_from(s, "mp_", d.mp)?,
        mlp_hidden: s.list("mlp_channels")?.unwrap_or(d.mlp_hidden),
        mlp_activation: s.get_or::<Activation>("mlp_activation", d.mlp_activation)?,
    })
}

fn assignments_csv(s: &Tensor, p: &[usize]) -> String {
    let mut out = String::from("vertex,cluster");
    for c in 0..s.cols() {
        let _ = write!(out, ",s_{c}");
    }
    out.push('\n');
    for (v, &c) in p.iter().enumerate() {
        let _ = write!(out, "{v},{c}");
        for x in s.row(v) {
            let _ = write!(out, ",{x:?}");
        }
        out.push('\n');
    }
    out
}

fn history_csv(history: &[EpochRecord]) -> String {
    let names: Vec<&String> = history.first().map(|r| r.components.keys().collect()).unwrap_or_default();
    let mut out = String::from("epoch,total");
    for n in &names {
        let _ = write!(out, ",{n}");
    }
    out.push('\n');
    for r in history {
        let _ = write!(out, "{},{:?}", r.epoch, r.total);
        for n in &names {
            let _ = write!(out, ",{:?}", r.components[*n]);
        }
        out.push('\n');
    }
    out
}

struct SeedJob<'a> {
    g: &'a Graph,
    k: usize,
    arch: &'a ClusterArch,
    cfg: TrainConfig,
    dir: PathBuf,
    order: ProfileOrder,
    ring: bool,
}

/// Train one seed, write its artifacts and return its summary row.
fn run_seed(job: SeedJob) -> CliResult<Value> {
    let SeedJob { g, k, arch, cfg, dir, order, ring } = job;
    let seed = cfg.seed;
    let outcome = train_cluster(g, k, arch, &cfg)?;
    let s = &outcome.assignment;
    let p = argmax_partition(s);

    let cut = cut_value(g, &p, k)?;
    let balance = cluster_balance(&p, k);
    let profile = max_assignment_profile(s, &order)?;
    let mean_max = profile.iter().sum::<f64>() / profile.len() as f64;
    let mut losses = Map::new();
    losses.insert("total".into(), num(outcome.report.total));
    for (name, v) in &outcome.report.components {
        losses.insert(name.clone(), num(*v));
    }

    let mut row = Map::new();
    row.insert("seed".into(), json!(seed));
    if let Some(labels) = g.vertex_labels() {
        row.insert("nmi".into(), num(nmi(labels, &p)?));
        row.insert("acc".into(), num(accuracy(labels, &p)?));
    }
    row.insert("cut_ratio".into(), num(cut.ratio));
    row.insert("non_empty_clusters".into(), json!(non_empty_clusters(&p)));
    row.insert("mean_max_assignment".into(), num(mean_max));
    row.insert("balance_entropy".into(), num(balance.entropy));
    if ring {
        row.insert("contiguous".into(), json!(ring_contiguous(&p)));
    }

    let mut metrics = row.clone();
    metrics.insert("k".into(), json!(k));
    metrics.insert("vertices".into(), json!(g.n_vertices()));
    metrics.insert("epochs".into(), json!(cfg.epochs));
    metrics.insert("loss".into(), Value::Object(losses));
    metrics.insert("cuts".into(), Value::Array(cut.cuts.iter().map(|&c| num(c)).collect()));
    metrics.insert("cluster_sizes".into(), json!(balance.sizes));

    let sort_key = g.vertex_labels().map(<[usize]>::to_vec).unwrap_or_else(|| p.clone());
    let sharp = sharpness_matrix(s, &sort_key)?;

    let mut profile_text = String::from("position,max_assignment\n");
    for (i, v) in profile.iter().enumerate() {
        let _ = writeln!(profile_text, "{i},{v:?}");
    }

    write_file(&dir.join(ASSIGNMENTS_FILE), assignments_csv(s, &p))?;
    write_json(&dir.join(METRICS_FILE), &Value::Object(metrics))?;
    write_file(&dir.join(SHARPNESS_FILE), pgm_bytes(&sharp))?;
    write_file(&dir.join(PROFILE_FILE), profile_text)?;
    write_file(&dir.join(HISTORY_FILE), history_csv(&outcome.history))?;
    save_checkpoint(&dir.join(MODEL_FILE), &outcome.model, &cfg)?;
    info!("seed {seed}: {}", Value::Object(row.clone()));
    Ok(Value::Object(row))
}

pub fn run(s: &Settings) -> CliResult<()> {
    s.check_task("cluster")?;
    let k: usize = s.require("k")?;
    let out: PathBuf = s.require("out")?;
    let seeds = s.seeds(&DEFAULT_SEEDS)?;
    let pool = thread_pool(s.get_or("jobs", 1)?)?;
    let (g, source) = load_graph(s)?;
    let arch = arch_from(s)?;
    let defaults = LossDefaults {
        alpha1: 0.785,
        alpha2: 0.514,
        dmon_reg: 1.0,
    };
    let base = TrainConfig {
        epochs: DEFAULT_EPOCHS,
        learning_rate: 1e-3,
        loss: loss_from(s, &defaults)?,
        ..TrainConfig::default()
    };
    let cfg = train_from(s, base)?;
    let ring = source == "ring";
    let order = match s.raw("profile") {
        None if ring => ProfileOrder::Vertex,
        None | Some("ascending") => ProfileOrder::Ascending,
        Some("vertex") => ProfileOrder::Vertex,
        Some(other) => return Err(CliError::usage(format!("unknown profile order {other:?}; expected vertex or ascending"))),
    };

    let rows: Vec<CliResult<Value>> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                run_seed(SeedJob {
                    g: &g,
                    k,
                    arch: &arch,
                    cfg: TrainConfig { seed, ..cfg.clone() },
                    dir: seed_dir(&out, seed),
                    order: order.clone(),
                    ring,
                })
            })
            .collect()
    });
    let rows = rows.into_iter().collect::<CliResult<Vec<Value>>>()?;

    let (mean, std) = summarize(&rows, &["nmi", "acc", "cut_ratio", "mean_max_assignment", "balance_entropy", "non_empty_clusters"]);
    let mut summary = json!({
        "task": "cluster",
        "graph": source,
        "k": k,
        "loss": cfg.loss.name(),
        "epochs": cfg.epochs,
        "seeds": seeds,
        "runs": rows,
        "mean": mean,
        "std": std,
    });
    if ring {
        let contiguous = rows.iter().filter(|r| r["contiguous"] == json!(true)).count();
        summary["contiguous_runs"] = json!(contiguous);
    }
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    println!("{}", serde_json::to_string(&json!({"mean": summary["mean"], "std": summary["std"]})).expect("json"));
    Ok(())
}
