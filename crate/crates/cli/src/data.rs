//! CSV ingestion and design-matrix construction.

use std::collections::HashMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::DMatrix;

pub const INTERCEPT: &str = "(Intercept)";

const MISSING: [&str; 4] = ["", "na", "nan", "null"];

#[derive(Debug, Clone)]
pub struct Dataset {
    pub headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

/// A covariate term: a column, optionally log-transformed. Numeric terms
/// contribute one design column, categorical ones one dummy per non-reference
/// level (the first level observed is the reference).
#[derive(Debug, Clone)]
pub struct Term {
    pub label: String,
    column: usize,
    log: bool,
    pub kind: TermKind,
}

#[derive(Debug, Clone)]
pub enum TermKind {
    Numeric { mean: f64 },
    Categorical { levels: Vec<String> },
}

#[derive(Debug, Clone)]
pub struct Design {
    pub terms: Vec<Term>,
    pub matrix: DMatrix<f64>,
    pub names: Vec<String>,
}

fn is_missing(s: &str) -> bool {
    MISSING.contains(&s.trim().to_ascii_lowercase().as_str())
}

impl Dataset {
    pub fn load(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .with_context(|| format!("cannot open {}", path.display()))?;
        let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        if headers.is_empty() || headers.iter().all(String::is_empty) {
            bail!("{}: missing header row", path.display());
        }
        let mut rows = Vec::new();
        for (k, rec) in reader.records().enumerate() {
            let rec = rec.with_context(|| format!("{}: malformed data row {}", path.display(), k + 1))?;
            rows.push(rec.iter().map(str::to_string).collect());
        }
        if rows.is_empty() {
            bail!("{}: no data rows", path.display());
        }
        Ok(Self { headers, rows })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("unknown column '{name}' (have: {})", self.headers.join(", ")))
    }

    /// Rejects missing values in the referenced columns, naming the data rows
    /// (1-based, header excluded).
    pub fn check_complete(&self, columns: &[&str]) -> Result<()> {
        let idx = columns.iter().map(|c| self.column(c)).collect::<Result<Vec<_>>>()?;
        let bad: Vec<String> = self
            .rows
            .iter()
            .enumerate()
            .filter(|(_, r)| idx.iter().any(|&j| is_missing(&r[j])))
            .map(|(i, _)| (i + 1).to_string())
            .collect();
        if !bad.is_empty() {
            bail!("missing values in data rows {}", bad.join(", "));
        }
        Ok(())
    }

    pub fn response(&self, name: &str) -> Result<Vec<f64>> {
        let j = self.column(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let y: f64 = r[j]
                    .parse()
                    .map_err(|_| anyhow!("response '{name}' in data row {} is not numeric: '{}'", i + 1, r[j]))?;
                if !(y > 0.0 && y < 1.0) {
                    bail!(
                        "response '{name}' in data row {} must lie strictly inside (0,1), got {y}",
                        i + 1
                    );
                }
                Ok(y)
            })
            .collect()
    }

    /// Parses `col` or `log(col)`.
    pub fn term(&self, spec: &str) -> Result<Term> {
        let spec = spec.trim();
        let (name, log) = match spec.strip_prefix("log(").and_then(|s| s.strip_suffix(')')) {
            Some(inner) => (inner.trim(), true),
            None => (spec, false),
        };
        let column = self.column(name)?;
        let values: Vec<&str> = self.rows.iter().map(|r| r[column].as_str()).collect();
        let numeric: Option<Vec<f64>> = values.iter().map(|v| v.parse::<f64>().ok()).collect();
        let kind = match numeric {
            Some(v) => {
                let v = if log {
                    if let Some(i) = v.iter().position(|&x| x <= 0.0) {
                        bail!("log({name}) needs positive values; data row {} has {}", i + 1, v[i]);
                    }
                    v.iter().map(|x| x.ln()).collect()
                } else {
                    v
                };
                TermKind::Numeric {
                    mean: v.iter().sum::<f64>() / v.len() as f64,
                }
            }
            None if log => bail!("log({name}): column is not numeric"),
            None => {
                let mut levels: Vec<String> = Vec::new();
                for v in values {
                    if !levels.iter().any(|l| l == v) {
                        levels.push(v.to_string());
                    }
                }
                TermKind::Categorical { levels }
            }
        };
        Ok(Term {
            label: spec.to_string(),
            column,
            log,
            kind,
        })
    }

    pub fn design(&self, specs: &[String]) -> Result<Design> {
        let terms = specs.iter().map(|s| self.term(s)).collect::<Result<Vec<_>>>()?;
        let rows: Vec<Vec<f64>> = self
            .rows
            .iter()
            .map(|r| {
                let assign: HashMap<&str, &str> =
                    terms.iter().map(|t| (t.label.as_str(), r[t.column].as_str())).collect();
                design_row(&terms, |t| Value::Raw(assign[t.label.as_str()]))
            })
            .collect::<Result<_>>()?;
        let names = design_names(&terms);
        let matrix = DMatrix::from_fn(rows.len(), names.len(), |i, j| rows[i][j]);
        Ok(Design { terms, matrix, names })
    }
}

/// How a term is set when building a single design row.
pub enum Value<'a> {
    /// A cell as read from the data file (transform still to be applied).
    Raw(&'a str),
    /// A value already on the term's scale.
    Term(f64),
    /// A categorical level.
    Level(&'a str),
}

fn design_names(terms: &[Term]) -> Vec<String> {
    let mut names = vec![INTERCEPT.to_string()];
    for t in terms {
        match &t.kind {
            TermKind::Numeric { .. } => names.push(t.label.clone()),
            TermKind::Categorical { levels } => names.extend(levels[1..].iter().map(|l| format!("{}[{l}]", t.label))),
        }
    }
    names
}

/// Intercept followed by each term's columns.
pub fn design_row<'a>(terms: &'a [Term], mut value: impl FnMut(&'a Term) -> Value<'a>) -> Result<Vec<f64>> {
    let mut row = vec![1.0];
    for t in terms {
        match (&t.kind, value(t)) {
            (TermKind::Numeric { .. }, Value::Raw(s)) => {
                let v: f64 = s.parse().map_err(|_| anyhow!("{}: '{s}' is not numeric", t.label))?;
                row.push(if t.log { v.ln() } else { v });
            }
            (TermKind::Numeric { .. }, Value::Term(v)) => row.push(v),
            (TermKind::Categorical { levels }, Value::Raw(s) | Value::Level(s)) => {
                if !levels.iter().any(|l| l == s) {
                    bail!("{}: unknown level '{s}' (have: {})", t.label, levels.join(", "));
                }
                row.extend(levels[1..].iter().map(|l| f64::from(l == s)));
            }
            (TermKind::Numeric { .. }, Value::Level(s)) => bail!("{} is numeric, got '{s}'", t.label),
            (TermKind::Categorical { .. }, Value::Term(v)) => {
                bail!("{} is categorical, got number {v}", t.label)
            }
        }
    }
    Ok(row)
}

impl Design {
    /// The term's default for prediction: its sample mean, or the reference
    /// level.
    pub fn default_value(term: &Term) -> Value<'_> {
        match &term.kind {
            TermKind::Numeric { mean } => Value::Term(*mean),
            TermKind::Categorical { levels } => Value::Level(&levels[0]),
        }
    }
}
