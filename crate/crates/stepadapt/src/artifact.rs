//! Deterministic artifact emission. Every artifact starts with a metadata
//! block (comment lines in CSV, a `meta` object in JSON) recording the tool
//! version, config hash, base seed, and whether --force was used, so that
//! re-running the recorded config reproduces the artifact byte for byte.
//! Nothing time- or host-dependent is ever written.

use crate::error::Result;
use serde_json::{Map, Number, Value};
use std::fs;
use std::path::Path;

pub const TOOL_NAME: &str = "stepadapt";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone)]
pub struct ArtifactMeta {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub force: bool,
}

impl ArtifactMeta {
    fn comment_block(&self) -> String {
        format!(
            "# tool: {TOOL_NAME} {TOOL_VERSION}\n# command: {}\n# config_sha256: {}\n# seed: {}\n# force: {}\n",
            self.command, self.config_sha256, self.seed, self.force
        )
    }

    fn json_object(&self) -> Value {
        let mut m = Map::new();
        m.insert("tool".into(), Value::String(TOOL_NAME.into()));
        m.insert("version".into(), Value::String(TOOL_VERSION.into()));
        m.insert("command".into(), Value::String(self.command.clone()));
        m.insert(
            "config_sha256".into(),
            Value::String(self.config_sha256.clone()),
        );
        m.insert("seed".into(), Value::Number(self.seed.into()));
        m.insert("force".into(), Value::Bool(self.force));
        Value::Object(m)
    }
}

/// One table cell; formats identically on every run.
#[derive(Debug, Clone)]
pub enum Cell {
    F(f64),
    U(u64),
    S(String),
    Opt(Option<f64>),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::F(v) => format!("{v}"),
            Cell::U(v) => format!("{v}"),
            Cell::S(s) => s.clone(),
            Cell::Opt(Some(v)) => format!("{v}"),
            Cell::Opt(None) => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::F(v) | Cell::Opt(Some(v)) => Number::from_f64(*v)
                .map(Value::Number)
                .unwrap_or(Value::Null),
            Cell::U(v) => Value::Number((*v).into()),
            Cell::S(s) => Value::String(s.clone()),
            Cell::Opt(None) => Value::Null,
        }
    }
}

/// A column-labelled table ready for CSV or JSON emission.
#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: Vec<&'static str>) -> Self {
        Table {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn to_csv(&self, meta: &ArtifactMeta) -> String {
        let mut out = meta.comment_block();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(Cell::csv).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    fn to_json(&self, meta: &ArtifactMeta) -> String {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let mut obj = Map::new();
                for (col, cell) in self.columns.iter().zip(row.iter()) {
                    obj.insert((*col).into(), cell.json());
                }
                Value::Object(obj)
            })
            .collect();
        let mut root = Map::new();
        root.insert("meta".into(), meta.json_object());
        root.insert("rows".into(), Value::Array(rows));
        let mut s = serde_json::to_string_pretty(&Value::Object(root)).expect("json serializes");
        s.push('\n');
        s
    }

    /// Write the table in the requested format ("csv" or "json").
    pub fn write(&self, path: &Path, meta: &ArtifactMeta, format: &str) -> Result<()> {
        let body = match format {
            "json" => self.to_json(meta),
            _ => self.to_csv(meta),
        };
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        fs::write(path, body)?;
        Ok(())
    }
}

/// Write a JSON artifact with `meta` plus caller-provided top-level fields.
pub fn write_json_report(
    path: &Path,
    meta: &ArtifactMeta,
    fields: Vec<(&str, Value)>,
) -> Result<String> {
    let mut root = Map::new();
    root.insert("meta".into(), meta.json_object());
    for (k, v) in fields {
        root.insert(k.into(), v);
    }
    let mut body = serde_json::to_string_pretty(&Value::Object(root)).expect("json serializes");
    body.push('\n');
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, &body)?;
    Ok(body)
}
