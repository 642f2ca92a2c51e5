//! Structured run reports and CSV tables.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

/// Schema tag written into every report.
pub const REPORT_SCHEMA: &str = "mqp-lab.report/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    /// Stochastic convention the white noise was integrated under, with the
    /// covariance scale for thermal models (e.g. `kinetic/2`).
    pub convention: String,
    pub config: BTreeMap<String, Value>,
    pub results: BTreeMap<String, Value>,
    /// Pass/fail cross-checks (filled by `validate`).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<Check>,
    /// CSV files written next to the report, relative to the output directory.
    pub artifacts: Vec<String>,
    pub status: Status,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl Check {
    /// Passes when `|value − expected| <= tolerance·max(1, |expected|)`.
    pub fn relative(name: &str, value: f64, expected: f64, tolerance: f64) -> Self {
        let err = (value - expected).abs() / expected.abs().max(1.0);
        Self {
            name: name.into(),
            passed: err <= tolerance,
            value,
            expected,
            tolerance,
            detail: format!("relative error {err:.3e}"),
        }
    }

    pub fn flag(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            value: if passed { 1.0 } else { 0.0 },
            expected: 1.0,
            tolerance: 0.0,
            detail: detail.into(),
        }
    }
}

/// Timing written separately so the report stays byte-identical across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds: f64,
    pub threads: Option<usize>,
}

/// A table destined for a CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(file: impl Into<String>, header: &[&str]) -> Self {
        Self {
            file: file.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_table(dir: &Path, table: &Table) -> Result<PathBuf, CliError> {
    let path = dir.join(&table.file);
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Io {
        path: path.clone(),
        source: e.into(),
    })?;
    let to_io = |e: csv::Error| CliError::Io {
        path: path.clone(),
        source: e.into(),
    };
    w.write_record(&table.header).map_err(to_io)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(to_io)?;
    }
    w.flush().map_err(io_err(&path))?;
    Ok(path)
}

pub fn report_json(report: &RunReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report values are serializable");
    s.push('\n');
    s
}

/// Writes `report.json`, `timing.json` and every table into `dir`.
pub fn write_report(dir: &Path, report: &RunReport, tables: &[Table], timing: &Timing) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for t in tables {
        write_table(dir, t)?;
    }
    let path = dir.join("report.json");
    fs::write(&path, report_json(report)).map_err(io_err(&path))?;
    let path = dir.join("timing.json");
    let timing = serde_json::to_string_pretty(timing).expect("timing is serializable");
    fs::write(&path, timing + "\n").map_err(io_err(&path))?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<RunReport, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Failed(format!("cannot parse {}: {e}", path.display())))
}
