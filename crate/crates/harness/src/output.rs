//! Result files. Everything written here is a pure function of the
//! configuration and seed, so reruns produce byte-identical output.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::HarnessError;
use crate::experiments::{OptimizeOutcome, ResultTable};
use crate::validate::CheckResult;

#[derive(Debug, Serialize)]
struct Meta<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    config: &'a ExperimentConfig,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(f, value)?;
    Ok(())
}

/// Writes `meta.json` with the fully resolved configuration.
pub fn write_meta(dir: &Path, command: &str, cfg: &ExperimentConfig) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    let meta = Meta {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed: cfg.seed,
        config: cfg,
    };
    write_json(&dir.join("meta.json"), &meta)
}

/// `results.csv` and, when the run simulated anything, `records.csv`.
pub fn write_table(dir: &Path, table: &ResultTable) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    write_csv(&dir.join("results.csv"), &table.rows)?;
    if !table.records.is_empty() {
        write_csv(&dir.join("records.csv"), &table.records)?;
    }
    Ok(())
}

fn file_stem(design: &str) -> String {
    design
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn write_optimize(dir: &Path, out: &OptimizeOutcome) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    d2d_cache::io::write_preferences(
        out.cluster.prefs(),
        File::create(dir.join("preferences.csv"))?,
    )?;
    d2d_cache::io::write_links(out.cluster.links(), File::create(dir.join("links.csv"))?)?;
    for (design, policy) in &out.policies {
        let name = format!("policy_{}.csv", file_stem(&design.to_string()));
        d2d_cache::io::write_policy(policy, File::create(dir.join(name))?)?;
    }
    write_json(&dir.join("report.json"), &out.reports)?;
    write_table(dir, &out.table)
}

pub fn write_validation(dir: &Path, checks: &[CheckResult]) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    write_csv(&dir.join("validate.csv"), checks)
}
