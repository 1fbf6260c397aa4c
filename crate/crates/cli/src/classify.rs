use std::fmt::Write as _;
use std::path::PathBuf;

use log::info;
use rayon::prelude::*;
use serde_json::{json, Value};
use tvgnn::graph::load_graph_collection;
use tvgnn::layers::Activation;
use tvgnn::models::{stratified_kfold, train_classifier, ClassifierArch, PoolKind, TrainConfig};

use crate::common::{enum_or, loss_from, mp_from, num, summarize, thread_pool, train_from, write_file, write_json, LossDefaults};
use crate::config::Settings;
use crate::error::CliResult;

/// Three runs per fold of a stratified 5-fold split.
pub const DEFAULT_SEEDS: [u64; 3] = [0, 1, 2];
pub const DEFAULT_FOLDS: usize = 5;
/// Upper bound on epochs; early stopping normally ends training sooner.
pub const DEFAULT_EPOCHS: usize = 10_000;

pub const ACCURACY_FILE: &str = "accuracy.csv";
pub const SUMMARY_FILE: &str = "summary.json";

pub fn arch_from(s: &Settings) -> CliResult<ClassifierArch> {
    let d = ClassifierArch::default();
    Ok(ClassifierArch {
        mp: mp_from(s, "mp_", d.mp)?,
        post_mp: mp_from(s, "post_mp_", d.post_mp)?,
        pool_hidden: s.list("pool_channels")?.unwrap_or(d.pool_hidden),
        pool_activation: s.get_or::<Activation>("pool_activation", d.pool_activation)?,
        k_pool: s.get("k_pool")?,
        blocks: s.get_or("blocks", d.blocks)?,
        readout: enum_or::<PoolKind>(s, "readout", d.readout)?,
    })
}

pub fn run(s: &Settings) -> CliResult<()> {
    s.check_task("classify")?;
    let data: PathBuf = s.require("data")?;
    let out: PathBuf = s.require("out")?;
    let folds: usize = s.get_or("folds", DEFAULT_FOLDS)?;
    let seeds = s.seeds(&DEFAULT_SEEDS)?;
    let split_seed: u64 = s.get_or("split_seed", 0)?;
    let pool = thread_pool(s.get_or("jobs", 1)?)?;
    let collection = load_graph_collection(&data)?;
    let arch = arch_from(s)?;
    let defaults = LossDefaults {
        alpha1: 0.623,
        alpha2: 0.832,
        dmon_reg: 0.1,
    };
    let base = TrainConfig {
        epochs: DEFAULT_EPOCHS,
        learning_rate: 1e-2,
        l2: 1e-4,
        loss: loss_from(s, &defaults)?,
        patience: s.get_or("patience", 20)?,
        batch_size: s.get_or("batch_size", 8)?,
        ..TrainConfig::default()
    };
    let cfg = train_from(s, base)?;
    let splits = stratified_kfold(&collection.labels(), folds, split_seed)?;

    let jobs: Vec<(usize, u64)> = (0..folds).flat_map(|f| seeds.iter().map(move |&sd| (f, sd))).collect();
    let rows: Vec<CliResult<Value>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(fold, seed)| {
                let (train, test) = &splits[fold];
                let run_cfg = TrainConfig { seed, ..cfg.clone() };
                let o = train_classifier(&collection, &arch, &run_cfg, train, test)?;
                info!("fold {fold} seed {seed}: accuracy {:.4} (best epoch {})", o.test_accuracy, o.best_epoch);
                Ok(json!({
                    "fold": fold,
                    "seed": seed,
                    "accuracy": num(o.test_accuracy),
                    "best_epoch": o.best_epoch,
                    "epochs_run": o.history.len(),
                }))
            })
            .collect()
    });
    let rows = rows.into_iter().collect::<CliResult<Vec<Value>>>()?;

    let mut table = String::from("fold,seed,accuracy,best_epoch,epochs_run\n");
    for r in &rows {
        let acc = r["accuracy"].as_f64().unwrap_or(f64::NAN);
        let _ = writeln!(table, "{},{},{acc:?},{},{}", r["fold"], r["seed"], r["best_epoch"], r["epochs_run"]);
    }
    write_file(&out.join(ACCURACY_FILE), table)?;

    let (mean, std) = summarize(&rows, &["accuracy"]);
    let summary = json!({
        "task": "classify",
        "graphs": collection.len(),
        "classes": collection.class_count(),
        "loss": cfg.loss.name(),
        "folds": folds,
        "seeds": seeds,
        "split_seed": split_seed,
        "runs": rows,
        "mean": mean,
        "std": std,
    });
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    println!("{}", serde_json::to_string(&json!({"mean": summary["mean"], "std": summary["std"]})).expect("json"));
    Ok(())
}
