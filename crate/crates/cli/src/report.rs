//! Tabular run artifacts and their CSV / JSON encodings.
//!
//! Every number is rounded to 10 significant digits before it is written, and
//! written in a form that parses back to exactly the rounded value.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Bool(bool),
    Int(i64),
    Num(f64),
    Text(String),
    Null,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        if v.is_nan() {
            Cell::Null
        } else {
            Cell::Num(v)
        }
    }
}
impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Null, Cell::from)
    }
}
impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}
impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}
impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}
impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// Rounds to 10 significant digits; non-finite values pass through.
pub fn round10(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.9e}").parse().expect("formatted float parses")
}

/// Shortest text that parses back to `round10(v)`, always marked as a float.
pub fn format_num(v: f64) -> String {
    let r = round10(v);
    if r.is_nan() {
        return "NA".into();
    }
    if r.is_infinite() {
        return if r > 0.0 { "inf" } else { "-inf" }.into();
    }
    let a = r.abs();
    let s = if a != 0.0 && !(1e-4..1e15).contains(&a) {
        format!("{r:e}")
    } else {
        format!("{r}")
    };
    if s.contains(['.', 'e']) {
        s
    } else {
        s + ".0"
    }
}

impl Cell {
    pub fn rounded(&self) -> Cell {
        match self {
            Cell::Num(v) if v.is_nan() => Cell::Null,
            Cell::Num(v) => Cell::Num(round10(*v)),
            other => other.clone(),
        }
    }

    fn to_csv(&self) -> String {
        match self {
            Cell::Bool(b) => b.to_string(),
            Cell::Int(i) => i.to_string(),
            Cell::Num(v) => format_num(*v),
            Cell::Text(s) => s.clone(),
            Cell::Null => "NA".into(),
        }
    }

    /// Inverse of the CSV encoding.
    pub fn parse_csv(s: &str) -> Cell {
        match s {
            "NA" => Cell::Null,
            "true" => Cell::Bool(true),
            "false" => Cell::Bool(false),
            "inf" => Cell::Num(f64::INFINITY),
            "-inf" => Cell::Num(f64::NEG_INFINITY),
            _ => {
                if let Ok(i) = s.parse::<i64>() {
                    Cell::Int(i)
                } else if let Ok(v) = s.parse::<f64>() {
                    Cell::Num(v)
                } else {
                    Cell::Text(s.to_string())
                }
            }
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            Cell::Int(i) => Some(*i as f64),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "table {}", self.name);
        self.rows.push(row);
    }

    pub fn rounded(&self) -> Table {
        Table {
            rows: self
                .rows
                .iter()
                .map(|r| r.iter().map(Cell::rounded).collect())
                .collect(),
            ..self.clone()
        }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.columns)?;
        for row in &self.rows {
            out.write_record(row.iter().map(Cell::to_csv))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv(name: &str, path: &Path) -> Result<Table> {
        let mut reader = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
        let columns = reader.headers()?.iter().map(str::to_string).collect();
        let rows = reader
            .records()
            .map(|r| Ok(r?.iter().map(Cell::parse_csv).collect()))
            .collect::<Result<_>>()?;
        Ok(Table {
            name: name.into(),
            columns,
            rows,
        })
    }
}

fn ignore_broken_pipe(r: std::io::Result<()>) -> std::io::Result<()> {
    match r {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => other,
    }
}

/// One run: the echoed configuration plus named result tables, the first of
/// which is the primary one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub config: serde_json::Map<String, serde_json::Value>,
    pub tables: Vec<Table>,
}

impl Report {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn rounded(&self) -> Report {
        Report {
            tables: self.tables.iter().map(Table::rounded).collect(),
            ..self.clone()
        }
    }

    fn config_table(&self) -> Table {
        let mut t = Table::new("config", &["key", "value"]);
        t.push(vec!["command".into(), self.command.as_str().into()]);
        for (k, v) in &self.config {
            let s = match v {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            t.push(vec![k.as_str().into(), s.into()]);
        }
        t
    }

    /// Where the CSV encoding puts table `name` when the primary table goes to
    /// `out`: `<stem>.<name>.csv` next to it.
    pub fn sibling_path(out: &Path, name: &str) -> PathBuf {
        let stem = out
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        out.with_file_name(format!("{stem}.{name}.csv"))
    }

    /// CSV: primary table at `out`, the others (and the config echo) beside
    /// it. Without `out`, all tables go to stdout, each under a `# name` line.
    /// JSON: one document at `out` or on stdout.
    pub fn write(&self, format: Format, out: Option<&Path>) -> Result<Vec<PathBuf>> {
        let rounded = self.rounded();
        match (format, out) {
            (Format::Json, Some(path)) => {
                fs::write(path, rounded.to_json()?).with_context(|| format!("cannot write {}", path.display()))?;
                Ok(vec![path.to_path_buf()])
            }
            (Format::Json, None) => {
                ignore_broken_pipe(std::io::stdout().lock().write_all(rounded.to_json()?.as_bytes()))?;
                Ok(Vec::new())
            }
            (Format::Csv, Some(path)) => {
                let Some(primary) = rounded.tables.first() else {
                    bail!("nothing to write");
                };
                let mut buf = Vec::new();
                primary.write_csv(&mut buf)?;
                let mut files = vec![(path.to_path_buf(), buf)];
                for t in rounded
                    .tables
                    .iter()
                    .skip(1)
                    .chain(std::iter::once(&rounded.config_table()))
                {
                    let mut buf = Vec::new();
                    t.write_csv(&mut buf)?;
                    files.push((Self::sibling_path(path, &t.name), buf));
                }
                for (p, bytes) in &files {
                    fs::write(p, bytes).with_context(|| format!("cannot write {}", p.display()))?;
                }
                Ok(files.into_iter().map(|(p, _)| p).collect())
            }
            (Format::Csv, None) => {
                let mut buf = Vec::new();
                for (k, t) in rounded.tables.iter().enumerate() {
                    if k > 0 {
                        writeln!(buf)?;
                    }
                    writeln!(buf, "# {}", t.name)?;
                    t.write_csv(&mut buf)?;
                }
                ignore_broken_pipe(std::io::stdout().lock().write_all(&buf))?;
                Ok(Vec::new())
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Report> {
        Ok(serde_json::from_str(s)?)
    }
}
