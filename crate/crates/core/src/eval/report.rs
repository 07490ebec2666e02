//! Report files: a comma-separated table with one `section,key,value` row per
//! number, and a structured summary next to it.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::EvalReport;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// `section,key,value` table plus a `.json` summary beside it.
    Csv,
    /// The full report as one JSON document.
    Json,
}

impl ReportFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => ReportFormat::Json,
            _ => ReportFormat::Csv,
        }
    }
}

/// Writes the report; for CSV also writes `<path>.summary.json`.
pub fn emit_report(report: &EvalReport, format: ReportFormat, path: &Path) -> Result<()> {
    match format {
        ReportFormat::Json => fs::write(path, serde_json::to_vec_pretty(report)?)?,
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_path(path)?;
            w.write_record(["section", "key", "value"])?;
            let f = |v: f64| v.to_string();
            w.write_record(["meta", "leaf_count", &report.leaf_count.to_string()])?;
            w.write_record(["meta", "documents", &report.documents().to_string()])?;
            w.write_record(["auch", "", &f(report.auch)])?;
            for (k, c) in report.histogram.iter().enumerate() {
                w.write_record(["histogram", &(k + 1).to_string(), &c.to_string()])?;
            }
            for (k, y) in report.envelope() {
                w.write_record(["envelope", &k.to_string(), &f(y)])?;
            }
            for (k, v) in &report.dcg_at {
                w.write_record(["dcg", &k.to_string(), &f(*v)])?;
            }
            for (k, v) in &report.p_at {
                w.write_record(["p_at", &k.to_string(), &f(*v)])?;
            }
            for (id, r) in &report.ranks {
                w.write_record(["rank", id, &r.to_string()])?;
            }
            w.flush()?;
            let summary = serde_json::json!({
                "auch": report.auch,
                "documents": report.documents(),
                "leaf_count": report.leaf_count,
                "histogram": report.histogram,
                "dcg_at": report.dcg_at,
                "p_at": report.p_at,
            });
            fs::write(summary_path(path), serde_json::to_vec_pretty(&summary)?)?;
        }
    }
    Ok(())
}

fn summary_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".summary.json");
    path.with_file_name(name)
}

pub fn read_report(path: &Path) -> Result<EvalReport> {
    if ReportFormat::from_path(path) == ReportFormat::Json {
        return Ok(serde_json::from_slice(&fs::read(path)?)?);
    }
    let bad = |message: String| Error::Format {
        path: path.to_owned(),
        message,
    };
    let mut rdr = csv::Reader::from_path(path)?;
    let mut leaf_count = None;
    let mut auch = None;
    let mut histogram = Vec::new();
    let mut dcg_at = BTreeMap::new();
    let mut p_at = BTreeMap::new();
    let mut ranks = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let (section, key, value) = (&row[0], &row[1], &row[2]);
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{section}: {e}")));
        let int = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| bad(format!("{section}: {e}")))
        };
        match section {
            "meta" if key == "leaf_count" => leaf_count = Some(int(value)?),
            "meta" => {}
            "auch" => auch = Some(num(value)?),
            "histogram" => histogram.push(int(value)?),
            "envelope" => {}
            "dcg" => {
                dcg_at.insert(int(key)?, num(value)?);
            }
            "p_at" => {
                p_at.insert(int(key)?, num(value)?);
            }
            "rank" => ranks.push((key.to_owned(), int(value)?)),
            other => return Err(bad(format!("unknown section {other:?}"))),
        }
    }
    Ok(EvalReport {
        leaf_count: leaf_count.ok_or_else(|| bad("missing leaf_count".into()))?,
        histogram,
        auch: auch.ok_or_else(|| bad("missing auch".into()))?,
        dcg_at,
        p_at,
        ranks,
    })
}
