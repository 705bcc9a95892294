//! Machine-readable run output: JSON run records and CSV estimate tables.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimate::VisibilityEstimate;

pub const CSV_HEADER: [&str; 7] = ["n", "visibility", "std_error", "provenance", "seed", "iterations", "wall_time_s"];

/// Everything needed to reproduce and interpret one CLI invocation.
///
/// `wall_time_s` is `None` unless timing was requested, so that repeated
/// runs with the same seed serialize to identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub config: serde_json::Value,
    pub estimates: Vec<VisibilityEstimate>,
    pub wall_time_s: Option<f64>,
    pub version: String,
    pub seed: u64,
    /// Command-specific output (scan tables, configurations, fits, reports).
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
}

impl RunRecord {
    pub fn new(command: &str, config: serde_json::Value, seed: u64) -> Self {
        RunRecord {
            command: command.to_string(),
            config,
            estimates: Vec::new(),
            wall_time_s: None,
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            details: serde_json::Value::Null,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// One CSV row; `n` is `inf` for values not tied to a finite ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub n: String,
    pub visibility: f64,
    pub std_error: f64,
    pub provenance: String,
    pub seed: u64,
    pub iterations: u64,
    pub wall_time_s: Option<f64>,
}

impl CsvRow {
    pub fn from_estimate(e: &VisibilityEstimate, wall_time_s: Option<f64>) -> Self {
        CsvRow {
            n: e.n_settings.map_or_else(|| "inf".to_string(), |n| n.to_string()),
            visibility: e.value,
            std_error: e.std_error,
            provenance: e.provenance.as_str().to_string(),
            seed: e.seed,
            iterations: e.iterations_used,
            wall_time_s,
        }
    }
}

/// Writes the header and one row per estimate. `wall_times` pairs with
/// `estimates` by index; missing entries leave the column empty.
pub fn write_csv<W: Write>(out: W, estimates: &[VisibilityEstimate], wall_times: &[Option<f64>]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_error)?;
    for (i, e) in estimates.iter().enumerate() {
        let row = CsvRow::from_estimate(e, wall_times.get(i).copied().flatten());
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(csv_error)?.clone();
    if headers.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(crate::Error::invalid(format!("unexpected CSV header {headers:?}")));
    }
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}

fn csv_error(e: csv::Error) -> crate::Error {
    crate::Error::Io(std::io::Error::other(e))
}
