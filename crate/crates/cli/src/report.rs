//! Report emission: versioned CSV rows, JSON summaries, and verdicts.
//!
//! The CSV is the source of truth: every verdict is recomputable from the
//! emitted rows alone, and identical configs produce byte-identical rows
//! regardless of worker count.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

/// A CSV table with a fixed, versioned column set; the first column of every
/// row carries the schema version.
pub struct CsvTable {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(columns: &[&'static str]) -> Self {
        let mut header = vec!["schema_version"];
        header.extend_from_slice(columns);
        Self { header, rows: Vec::new() }
    }

    pub fn push(&mut self, cells: Vec<String>) {
        assert_eq!(cells.len() + 1, self.header.len(), "row width mismatch");
        let mut row = vec![SCHEMA_VERSION.to_string()];
        row.extend(cells);
        self.rows.push(row);
    }

    pub fn to_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_string())
            .with_context(|| format!("cannot write {}", path.display()))
    }
}

/// JSON report: config echo, rows, fit, prediction, verdict, and timing.
#[derive(Serialize)]
pub struct Report<C: Serialize, R: Serialize> {
    pub schema: &'static str,
    pub config: C,
    pub rows: Vec<R>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<declab_core::ExponentFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted_exponent: Option<f64>,
    pub verdict: Verdict,
    pub wall_clock_ms: u128,
    pub workers: usize,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).context("report serialization failed")?;
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Output locations for an experiment run.
pub struct OutPaths {
    pub csv: PathBuf,
    pub json: PathBuf,
}

pub fn out_paths(dir: &Path, stem: &str) -> Result<OutPaths> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    Ok(OutPaths { csv: dir.join(format!("{stem}.csv")), json: dir.join(format!("{stem}.json")) })
}

/// Shortest round-trip formatting; fixed across platforms, so reruns and
/// different worker counts emit identical bytes.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn fmt_signature(entries: &[f64]) -> String {
    entries.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(";")
}
