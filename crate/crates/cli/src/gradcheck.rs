use std::path::PathBuf;

use tvgnn::checks::{run_suite, SuiteConfig};

use crate::common::write_json;
use crate::config::Settings;
use crate::error::{CliError, CliResult};

pub fn run(s: &Settings) -> CliResult<()> {
    s.check_task("gradcheck")?;
    let d = SuiteConfig::default();
    let cfg = SuiteConfig {
        points: s.get_or("points", d.points)?,
        h: s.get_or("h", d.h)?,
        seed: s.get_or("seed", d.seed)?,
        fault: s.get("inject_fault")?,
    };
    let report = run_suite(&cfg)?;
    println!("step h = {:e}, {} points per op, tolerance {:e}", report.h, cfg.points, report.tolerance);
    println!("{:<24} {:>14} {:>10}  status", "op", "max_rel_error", "resampled");
    for r in &report.results {
        let status = if r.max_rel_error <= report.tolerance { "ok" } else { "FAIL" };
        println!("{:<24} {:>14.3e} {:>10}  {status}", r.op, r.max_rel_error, r.resampled);
    }
    if let Some(out) = s.get::<PathBuf>("out")? {
        write_json(&out, &serde_json::to_value(&report).expect("report serializes"))?;
    }
    let failed: Vec<String> = report
        .failures()
        .iter()
        .map(|r| format!("{} ({:.3e})", r.op, r.max_rel_error))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(format!("gradient check failed: {}", failed.join(", "))))
    }
}
