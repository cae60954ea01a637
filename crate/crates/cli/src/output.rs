//! Report files: `<command>.json`, `<command>.csv` and `<command>_long.csv`.

use std::fs;
use std::path::Path;

use anyhow::{ensure, Context, Result};
use serde::Serialize;
use serde_json::Value;
use tradeoff_core::Estimate;

pub const SCHEMA_VERSION: &str = "1";

/// Formats a float so that it parses back to the same bits.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

/// One CSV row as `(column, cell)` pairs.
#[derive(Debug, Default, Clone)]
pub struct Row(Vec<(String, String)>);

impl Row {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn text(mut self, column: &str, value: impl ToString) -> Self {
        self.0.push((column.to_string(), value.to_string()));
        self
    }

    pub fn num(self, column: &str, value: f64) -> Self {
        self.text(column, num(value))
    }

    /// Adds `<prefix>`, `<prefix>_se`, `<prefix>_n` and `<prefix>_lower_bound`.
    pub fn est(self, prefix: &str, e: &Estimate) -> Self {
        self.num(prefix, e.value)
            .num(&format!("{prefix}_se"), e.std_error)
            .text(&format!("{prefix}_n"), e.n)
            .text(&format!("{prefix}_lower_bound"), e.lower_bound)
    }
}

/// One row of the long table.
#[derive(Debug, Clone)]
pub struct LongRow {
    pub config_hash: String,
    /// Empty for rows without a radius.
    pub eps: Option<f64>,
    pub metric: String,
    pub value: f64,
    pub se: f64,
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub rows: Vec<Row>,
    pub long: Vec<LongRow>,
    /// Command-specific content of the JSON report.
    pub report: Value,
    /// Some inequality audit failed.
    pub audit_failed: bool,
    /// Some row could not be computed and is flagged in the output.
    pub computation_failed: bool,
}

impl Outcome {
    pub fn long(&mut self, hash: &str, eps: Option<f64>, metric: impl Into<String>, value: f64, se: f64) {
        self.long.push(LongRow {
            config_hash: hash.to_string(),
            eps,
            metric: metric.into(),
            value,
            se,
        });
    }

    pub fn long_est(&mut self, hash: &str, eps: Option<f64>, metric: impl Into<String>, e: &Estimate) {
        self.long(hash, eps, metric, e.value, e.std_error);
    }

    pub fn exit_code(&self) -> i32 {
        if self.audit_failed {
            2
        } else if self.computation_failed {
            1
        } else {
            0
        }
    }
}

fn write_table(path: &Path, rows: &[Row]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    if let Some(first) = rows.first() {
        let header: Vec<&str> = std::iter::once("schema_version").chain(first.0.iter().map(|(c, _)| c.as_str())).collect();
        w.write_record(&header)?;
        for (i, row) in rows.iter().enumerate() {
            let cols: Vec<&str> = row.0.iter().map(|(c, _)| c.as_str()).collect();
            ensure!(cols == header[1..], "row {i} has columns {cols:?}, expected {:?}", &header[1..]);
            w.write_record(std::iter::once(SCHEMA_VERSION).chain(row.0.iter().map(|(_, v)| v.as_str())))?;
        }
    } else {
        w.write_record(["schema_version"])?;
    }
    w.flush()?;
    Ok(())
}

fn write_long(path: &Path, rows: &[LongRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["schema_version", "config_hash", "eps", "metric", "value", "se"])?;
    for r in rows {
        let eps = r.eps.map(num).unwrap_or_default();
        w.write_record([SCHEMA_VERSION, &r.config_hash, &eps, &r.metric, &num(r.value), &num(r.se)])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Report<'a> {
    schema_version: &'a str,
    command: &'a str,
    config_hash: &'a str,
    seed: u64,
    exit_code: i32,
    config: &'a Value,
    results: &'a Value,
}

pub fn write_all(
    dir: &Path,
    command: &str,
    config_hash: &str,
    seed: u64,
    config: &Value,
    outcome: &Outcome,
) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let stem = command.replace('-', "_");
    write_table(&dir.join(format!("{stem}.csv")), &outcome.rows)?;
    write_long(&dir.join(format!("{stem}_long.csv")), &outcome.long)?;
    let report = Report {
        schema_version: SCHEMA_VERSION,
        command,
        config_hash,
        seed,
        exit_code: outcome.exit_code(),
        config,
        results: &outcome.report,
    };
    let text = serde_json::to_string_pretty(&report)?;
    fs::write(dir.join(format!("{stem}.json")), text + "\n")?;
    Ok(())
}
