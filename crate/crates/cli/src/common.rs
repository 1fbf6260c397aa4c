//! Settings-to-model plumbing and artifact helpers shared by subcommands.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::Value;
use tvgnn::layers::Activation;
use tvgnn::losses::{AuxLoss, DmonConfig, QuantileGradient, TvLossConfig};
use tvgnn::models::{MpConfig, MpKind, TrainConfig};

use crate::config::Settings;
use crate::error::{CliError, CliResult};

pub const LOSS_KEYS: &[&str] = &["loss", "alpha1", "alpha2", "rho", "quantile_gradient", "dmon_reg", "dmon_normalized"];
pub const TRAIN_KEYS: &[&str] = &["epochs", "learning_rate", "l2"];

/// Parse a lowercase enum name through its serde representation.
pub fn parse_enum<T: DeserializeOwned>(key: &str, raw: &str) -> CliResult<T> {
    serde_json::from_value(Value::String(raw.to_string()))
        .map_err(|_| CliError::usage(format!("invalid value {raw:?} for {key}")))
}

pub fn enum_or<T: DeserializeOwned>(s: &Settings, key: &str, default: T) -> CliResult<T> {
    match s.raw(key) {
        Some(raw) => parse_enum(key, raw),
        None => Ok(default),
    }
}

pub struct LossDefaults {
    pub alpha1: f64,
    pub alpha2: f64,
    pub dmon_reg: f64,
}

pub fn loss_from(s: &Settings, d: &LossDefaults) -> CliResult<AuxLoss> {
    let kind = s.raw("loss").unwrap_or("tvgnn");
    Ok(match kind {
        "tvgnn" => AuxLoss::Tvgnn(TvLossConfig {
            rho: s.get("rho")?,
            alpha1: s.get_or("alpha1", d.alpha1)?,
            alpha2: s.get_or("alpha2", d.alpha2)?,
            quantile_gradient: enum_or(s, "quantile_gradient", QuantileGradient::Frozen)?,
        }),
        "mincut" => AuxLoss::Mincut,
        "dmon" => AuxLoss::Dmon(DmonConfig {
            normalized: s.get_or("dmon_normalized", false)?,
            reg_weight: s.get_or("dmon_reg", d.dmon_reg)?,
        }),
        other => return Err(CliError::usage(format!("unknown loss {other:?}; expected tvgnn, mincut or dmon"))),
    })
}

/// Message-passing stack from `<prefix>channels`, `<prefix>activation` and
/// the shared `mp`, `delta`, `epsilon`, `variant` keys.
pub fn mp_from(s: &Settings, prefix: &str, default: MpConfig) -> CliResult<MpConfig> {
    let cfg = MpConfig {
        kind: enum_or::<MpKind>(s, "mp", default.kind)?,
        channels: s.list(&format!("{prefix}channels"))?.unwrap_or(default.channels),
        activation: s.get_or::<Activation>(&format!("{prefix}activation"), default.activation)?,
        delta: s.get_or("delta", default.delta)?,
        epsilon: s.get_or("epsilon", default.epsilon)?,
        variant: enum_or(s, "variant", default.variant)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn train_from(s: &Settings, base: TrainConfig) -> CliResult<TrainConfig> {
    let cfg = TrainConfig {
        epochs: s.get_or("epochs", base.epochs)?,
        learning_rate: s.get_or("learning_rate", base.learning_rate)?,
        l2: s.get_or("l2", base.l2)?,
        ..base
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn write_json(path: &Path, value: &Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("json values serialize");
    text.push('\n');
    write_file(path, text)
}

/// JSON number, or a string for values JSON cannot hold.
pub fn num(v: f64) -> Value {
    if v.is_finite() {
        Value::from(v)
    } else if v.is_nan() {
        Value::from("nan")
    } else if v > 0.0 {
        Value::from("inf")
    } else {
        Value::from("-inf")
    }
}

/// Inverse of [`num`].
pub fn read_num(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => match s.as_str() {
            "inf" => Some(f64::INFINITY),
            "-inf" => Some(f64::NEG_INFINITY),
            "nan" => Some(f64::NAN),
            _ => None,
        },
        _ => None,
    }
}

/// Mean and population standard deviation, accumulated in the given order.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `{"mean": {...}, "std": {...}}` over the named per-run metrics.
pub fn summarize(runs: &[Value], metrics: &[&str]) -> (Value, Value) {
    let mut mean = serde_json::Map::new();
    let mut std = serde_json::Map::new();
    for &m in metrics {
        let values: Vec<f64> = runs.iter().filter_map(|r| r.get(m).and_then(read_num)).collect();
        if values.len() == runs.len() && !values.is_empty() {
            let (mu, sd) = mean_std(&values);
            mean.insert(m.to_string(), num(mu));
            std.insert(m.to_string(), num(sd));
        }
    }
    (Value::Object(mean), Value::Object(std))
}

pub fn thread_pool(jobs: usize) -> CliResult<rayon::ThreadPool> {
    if jobs == 0 {
        return Err(CliError::usage("--jobs must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::usage(format!("cannot start {jobs} workers: {e}")))
}
