use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ExperimentConfig, RejectionTable};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::Config(format!("unknown report format {other:?}"))),
        }
    }
}

/// SHA-256 of the config's canonical JSON encoding.
pub fn config_hash(config: &ExperimentConfig) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

const COLUMNS: [&str; 10] = [
    "setup",
    "signal",
    "rejection_rate",
    "rejections",
    "replications",
    "failures",
    "mean_p_value",
    "mean_statistic",
    "config_hash",
    "base_seed",
];

fn write_csv<W: Write>(table: &RejectionTable, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(COLUMNS)?;
    for r in &table.rows {
        w.write_record([
            r.setup.clone(),
            r.signal.to_string(),
            r.rejection_rate.to_string(),
            r.rejections.to_string(),
            r.replications.to_string(),
            r.failures.to_string(),
            r.mean_p_value.to_string(),
            r.mean_statistic.to_string(),
            table.config_hash.clone(),
            table.base_seed.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

/// Writes `table` to `path`.
pub fn emit_report(table: &RejectionTable, format: ReportFormat, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    match format {
        ReportFormat::Csv => write_csv(table, &mut out)?,
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut out, table)?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads back a JSON report.
pub fn read_report(path: &Path) -> Result<RejectionTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
