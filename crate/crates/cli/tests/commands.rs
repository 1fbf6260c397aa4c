use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;
use tempfile::tempdir;
use tvgnn_cli::run;
use walkdir::WalkDir;

fn tvgnn(args: &[&str]) -> i32 {
    let mut argv = vec!["tvgnn"];
    argv.extend_from_slice(args);
    run(argv)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn tree_bytes(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .map(|e| e.unwrap())
        .filter(|e| e.file_type().is_file())
        .map(|e| (e.path().strip_prefix(root).unwrap().to_path_buf(), fs::read(e.path()).unwrap()))
        .collect()
}

fn small_sbm_args<'a>(out: &'a str, seeds: &'a str) -> Vec<&'a str> {
    vec![
        "cluster", "--generator", "sbm", "--sizes", "10,10", "--p-in", "0.8", "--p-out", "0.05", "--graph-seed", "3",
        "--k", "2", "--epochs", "20", "--seeds", seeds, "--out", out, "--jobs", "2",
    ]
}

/// Rings labelled 0 and paths labelled 1, degree one-hot features.
fn write_collection(path: &Path, rings: usize, paths: usize) {
    let mut text = String::new();
    for i in 0..rings + paths {
        let n = 5 + i % 3;
        let mut edges: Vec<[usize; 2]> = (0..n - 1).map(|v| [v, v + 1]).collect();
        let label = usize::from(i >= rings);
        if label == 0 {
            edges.push([n - 1, 0]);
        }
        let rec = serde_json::json!({"edges": edges, "degrees_as_features": true, "label": label});
        text.push_str(&rec.to_string());
        text.push('\n');
    }
    fs::write(path, text).unwrap();
}

#[test]
fn gen_ring_writes_three_files_and_n_edges() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("ring");
    assert_eq!(tvgnn(&["gen", "--kind", "ring", "--n", "100", "--out", out.to_str().unwrap()]), 0);
    assert_eq!(fs::read_dir(&out).unwrap().count(), 3);
    let edges = fs::read_to_string(out.join("edges.tsv")).unwrap();
    assert_eq!(edges.lines().count(), 100);
}

#[test]
fn gen_rejects_tiny_ring() {
    let dir = tempdir().unwrap();
    assert_eq!(tvgnn(&["gen", "--kind", "ring", "--n", "2", "--out", dir.path().to_str().unwrap()]), 2);
}

#[test]
fn gen_sbm_is_reproducible() {
    let dir = tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let args = ["gen", "--kind", "sbm", "--sizes", "20,20", "--p-in", "0.8", "--p-out", "0.05", "--seed", "7", "--out"];
        let mut argv = args.to_vec();
        argv.push(out.to_str().unwrap());
        assert_eq!(tvgnn(&argv), 0);
    }
    assert_eq!(tree_bytes(&a), tree_bytes(&b));
    assert!(a.join("labels.txt").is_file());
}

#[test]
fn unknown_subcommand_and_missing_k_are_usage_errors() {
    let dir = tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(tvgnn(&["bogus"]), 2);
    assert_eq!(tvgnn(&["cluster", "--generator", "ring", "--n", "10", "--out", out]), 2);
    assert_eq!(tvgnn(&["gen", "--kind", "ring", "--n", "ten", "--out", out]), 2);
}

#[test]
fn config_file_keys_are_checked_and_overridable() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let out = dir.path().join("g");
    fs::write(&cfg, "# ring\nkind = ring\nn = 12\n").unwrap();
    let (cfg_s, out_s) = (cfg.to_str().unwrap(), out.to_str().unwrap());
    assert_eq!(tvgnn(&["gen", "--config", cfg_s, "--n", "9", "--out", out_s]), 0);
    assert_eq!(fs::read_to_string(out.join("edges.tsv")).unwrap().lines().count(), 9);

    fs::write(&cfg, "kind = ring\nn = 12\nwidth = 3\n").unwrap();
    assert_eq!(tvgnn(&["gen", "--config", cfg_s, "--out", out_s]), 2);
    fs::write(&cfg, "task = cluster\nkind = ring\nn = 12\n").unwrap();
    assert_eq!(tvgnn(&["gen", "--config", cfg_s, "--out", out_s]), 2);
}

#[test]
fn cluster_writes_artifacts_and_exact_summary() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("run");
    assert_eq!(tvgnn(&small_sbm_args(out.to_str().unwrap(), "4,9")), 0);
    for seed in [4, 9] {
        let seed_dir = out.join(format!("seed-{seed}"));
        for f in ["assignments.csv", "metrics.json", "sharpness.pgm", "profile.csv", "history.csv", "model.json"] {
            assert!(seed_dir.join(f).is_file(), "{f}");
        }
        let metrics = read_json(&seed_dir.join("metrics.json"));
        assert!(metrics["nmi"].is_number() && metrics["acc"].is_number());
        let assignments = fs::read_to_string(seed_dir.join("assignments.csv")).unwrap();
        assert_eq!(assignments.lines().next().unwrap(), "vertex,cluster,s_0,s_1");
        assert_eq!(assignments.lines().count(), 21);
        assert!(fs::read(seed_dir.join("sharpness.pgm")).unwrap().starts_with(b"P5\n20 20\n255\n"));
    }

    let summary = read_json(&out.join("summary.json"));
    for key in ["nmi", "acc", "cut_ratio", "mean_max_assignment", "balance_entropy"] {
        let values: Vec<f64> = [4, 9]
            .iter()
            .map(|s| read_json(&out.join(format!("seed-{s}/metrics.json")))[key].as_f64().unwrap())
            .collect();
        let mean = values.iter().sum::<f64>() / 2.0;
        let std = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 2.0).sqrt();
        assert_eq!(summary["mean"][key].as_f64().unwrap(), mean, "{key}");
        assert_eq!(summary["std"][key].as_f64().unwrap(), std, "{key}");
    }
}

#[test]
fn cluster_reruns_are_byte_identical() {
    let dir = tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(tvgnn(&small_sbm_args(a.to_str().unwrap(), "1,2")), 0);
    let mut args = small_sbm_args(b.to_str().unwrap(), "1,2");
    let jobs = args.len() - 1;
    args[jobs] = "1";
    assert_eq!(tvgnn(&args), 0);
    assert_eq!(tree_bytes(&a), tree_bytes(&b));
}

#[test]
fn ring_summary_lists_contiguity() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("ring");
    let args = ["cluster", "--generator", "ring", "--n", "20", "--k", "2", "--epochs", "5", "--seeds", "0,1", "--out"];
    let mut argv = args.to_vec();
    argv.push(out.to_str().unwrap());
    assert_eq!(tvgnn(&argv), 0);
    let summary = read_json(&out.join("summary.json"));
    assert!(summary["runs"].as_array().unwrap().iter().all(|r| r["contiguous"].is_boolean()));
    assert!(summary["contiguous_runs"].is_number());
}

#[test]
fn diverging_training_exits_three() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("boom");
    let args = [
        "cluster", "--generator", "ring", "--n", "12", "--k", "3", "--epochs", "50", "--learning-rate", "1e300", "--out",
    ];
    let mut argv = args.to_vec();
    argv.push(out.to_str().unwrap());
    assert_eq!(tvgnn(&argv), 3);
}

#[test]
fn eval_scores_saved_assignments() {
    let dir = tempdir().unwrap();
    let labels = dir.path().join("labels.txt");
    let same = dir.path().join("same.txt");
    let constant = dir.path().join("constant.txt");
    let short = dir.path().join("short.txt");
    let report = dir.path().join("report.json");
    fs::write(&labels, "0\n0\n1\n1\n2\n2\n").unwrap();
    fs::write(&same, "2\n2\n0\n0\n1\n1\n").unwrap();
    fs::write(&constant, "0\n0\n0\n0\n0\n0\n").unwrap();
    fs::write(&short, "0\n1\n").unwrap();
    let l = labels.to_str().unwrap();

    let code = tvgnn(&["eval", "--assignments", same.to_str().unwrap(), "--labels", l, "--out", report.to_str().unwrap()]);
    assert_eq!(code, 0);
    let r = read_json(&report);
    assert_eq!(r["nmi"], 1.0);
    assert_eq!(r["acc"], 1.0);

    let code = tvgnn(&["eval", "--assignments", constant.to_str().unwrap(), "--labels", l, "--out", report.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(read_json(&report)["nmi"], 0.0);

    assert_eq!(tvgnn(&["eval", "--assignments", short.to_str().unwrap(), "--labels", l]), 2);
}

#[test]
fn eval_reads_cluster_output() {
    let dir = tempdir().unwrap();
    let graph = dir.path().join("graph");
    let out = dir.path().join("run");
    let report = dir.path().join("report.json");
    let g = graph.to_str().unwrap();
    let gen = ["gen", "--kind", "sbm", "--sizes", "10,10", "--p-in", "0.8", "--p-out", "0.05", "--seed", "3", "--out", g];
    assert_eq!(tvgnn(&gen), 0);
    let (edges, features, labels) = (graph.join("edges.tsv"), graph.join("features.csv"), graph.join("labels.txt"));
    let (e, f, l) = (edges.to_str().unwrap(), features.to_str().unwrap(), labels.to_str().unwrap());
    let cluster = [
        "cluster", "--edges", e, "--features", f, "--labels", l, "--k", "2", "--epochs", "20", "--seeds", "0", "--out",
        out.to_str().unwrap(),
    ];
    assert_eq!(tvgnn(&cluster), 0);
    let assignments = out.join("seed-0/assignments.csv");
    let code = tvgnn(&[
        "eval", "--assignments", assignments.to_str().unwrap(), "--labels", l, "--edges", e, "--k", "2", "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let metrics = read_json(&out.join("seed-0/metrics.json"));
    let r = read_json(&report);
    assert_eq!(r["nmi"], metrics["nmi"]);
    assert_eq!(r["acc"], metrics["acc"]);
    assert_eq!(r["cut_ratio"], metrics["cut_ratio"]);
}

#[test]
fn gradcheck_passes_and_reports_injected_fault() {
    let dir = tempdir().unwrap();
    let report = dir.path().join("grad.json");
    let r = report.to_str().unwrap();
    assert_eq!(tvgnn(&["gradcheck", "--points", "3", "--h", "1e-5", "--out", r]), 0);
    let json = read_json(&report);
    assert_eq!(json["h"], 1e-5);
    assert!(json["results"].as_array().unwrap().len() >= 30);

    assert_eq!(tvgnn(&["gradcheck", "--points", "3", "--h", "1e-4", "--out", r]), 0);
    assert_eq!(read_json(&report)["h"], 1e-4);

    assert_eq!(tvgnn(&["gradcheck", "--points", "3", "--inject-fault", "elu"]), 1);
    assert_eq!(tvgnn(&["gradcheck", "--points", "3", "--h", "1"]), 2);
}

#[test]
fn classify_writes_fold_by_seed_rows() {
    let dir = tempdir().unwrap();
    let data = dir.path().join("toy.jsonl");
    let out = dir.path().join("cls");
    write_collection(&data, 10, 10);
    let args = ["classify", "--data", data.to_str().unwrap(), "--epochs", "3", "--k-pool", "2", "--out", out.to_str().unwrap()];
    assert_eq!(tvgnn(&args), 0);
    let table = fs::read_to_string(out.join("accuracy.csv")).unwrap();
    assert_eq!(table.lines().next().unwrap(), "fold,seed,accuracy,best_epoch,epochs_run");
    assert_eq!(table.lines().count(), 16);
    let summary = read_json(&out.join("summary.json"));
    assert!(summary["mean"]["accuracy"].is_number());

    let dmon = dir.path().join("dmon");
    let mut args = args.to_vec();
    let last = args.len() - 1;
    args[last] = dmon.to_str().unwrap();
    args.extend(["--loss", "dmon", "--seeds", "0"]);
    assert_eq!(tvgnn(&args), 0);
    assert_eq!(fs::read_to_string(dmon.join("accuracy.csv")).unwrap().lines().count(), 6);
}

#[test]
fn classify_rejects_more_folds_than_class_members() {
    let dir = tempdir().unwrap();
    let data = dir.path().join("toy.jsonl");
    write_collection(&data, 5, 8);
    let out = dir.path().join("cls");
    let args = ["classify", "--data", data.to_str().unwrap(), "--folds", "6", "--out", out.to_str().unwrap()];
    assert_eq!(tvgnn(&args), 2);
}
