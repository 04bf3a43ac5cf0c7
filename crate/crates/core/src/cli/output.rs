//! Table emission. Numbers are written as `{:.16e}` so that identical inputs
//! give byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use super::config::{Format, RunConfig};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    I(usize),
    S(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::F(x) if x.is_nan() => "NaN".into(),
            Cell::F(x) => format!("{x:.16e}"),
            Cell::I(k) => k.to_string(),
            Cell::S(s) => s.replace([',', '\n'], ";"),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::F(x) if x.is_finite() => Value::String(format!("{x:.16e}")),
            Cell::F(x) => Value::String(format!("{x}")),
            Cell::I(k) => json!(k),
            Cell::S(s) => json!(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}

impl From<usize> for Cell {
    fn from(k: usize) -> Self {
        Cell::I(k)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::S(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::S(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// CSV with the config echoed as `#` comments ahead of the column header.
    pub fn to_csv(&self, cfg: &RunConfig) -> String {
        let mut out = String::new();
        for line in cfg.render().lines() {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        out.push_str(&format!("# config_sha256 = {}\n", cfg.content_hash()));
        out.push_str("# ");
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self, cfg: &RunConfig) -> String {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| Value::Array(r.iter().map(Cell::json).collect()))
            .collect();
        let doc = json!({
            "config": cfg.render(),
            "config_sha256": cfg.content_hash(),
            "columns": self.columns,
            "rows": rows,
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("table serializes");
        s.push('\n');
        s
    }

    /// Writes `<dir>/<stem>.csv` or `.json` according to the config format.
    pub fn write(&self, dir: &Path, stem: &str, cfg: &RunConfig) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let (ext, body) = match cfg.format {
            Format::Csv => ("csv", self.to_csv(cfg)),
            Format::Json => ("json", self.to_json(cfg)),
        };
        let path = dir.join(format!("{stem}.{ext}"));
        fs::write(&path, body)?;
        Ok(path)
    }
}

/// Recovers the config from the `#` comment block of an emitted CSV.
pub fn config_from_csv(text: &str) -> Result<RunConfig> {
    let mut body = String::new();
    for line in text.lines() {
        let Some(rest) = line.strip_prefix("# ") else {
            break;
        };
        if rest.starts_with("config_sha256") {
            break;
        }
        body.push_str(rest);
        body.push('\n');
    }
    RunConfig::parse(&body)
}
