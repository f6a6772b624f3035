//! Plain-text tables: CSV with a single `#` manifest line on top.

use std::fmt::Write as _;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::numerics::GridFunction;

/// Provenance of one output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub model_digest: Option<String>,
    pub parameters: serde_json::Value,
    pub version: String,
    pub seed: Option<u64>,
    pub timestamp: u64,
}

impl RunManifest {
    pub fn new(command: &str, model: Option<&ModelSpec>, parameters: serde_json::Value, seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            model_digest: model.map(model_digest),
            parameters,
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        }
    }

    pub fn header_line(&self) -> String {
        format!("# {}", serde_json::to_string(self).expect("serializable manifest"))
    }
}

/// SHA-256 of the canonical JSON form of a model.
pub fn model_digest(model: &ModelSpec) -> String {
    let h = Sha256::digest(model.to_json().to_string().as_bytes());
    h.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
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

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Num(v as f64)
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format_f64(*v),
            Cell::Text(s) => s.clone(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            Cell::Text(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(columns: &[S]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let k = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::GridMismatch(format!("no column `{name}`")))?;
        self.rows
            .iter()
            .map(|r| r[k].as_f64().ok_or_else(|| Error::GridMismatch(format!("column `{name}` is not numeric"))))
            .collect()
    }

    /// CSV body without the manifest line.
    pub fn payload(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            let line: Vec<String> = r.iter().map(Cell::render).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }

    pub fn to_csv(&self, manifest: &RunManifest) -> String {
        format!("{}\n{}", manifest.header_line(), self.payload())
    }

    /// Parses CSV text written by [`Table::to_csv`] or [`Table::payload`].
    pub fn parse(text: &str) -> Result<(Option<RunManifest>, Table)> {
        let mut manifest = None;
        let mut lines = text.lines().peekable();
        while let Some(l) = lines.peek() {
            if let Some(rest) = l.strip_prefix('#') {
                if manifest.is_none() {
                    manifest = serde_json::from_str(rest.trim()).ok();
                }
                lines.next();
            } else {
                break;
            }
        }
        let header = lines.next().ok_or_else(|| Error::GridMismatch("missing CSV header".into()))?;
        let mut t = Table::new(&header.split(',').collect::<Vec<_>>());
        for (i, l) in lines.enumerate() {
            if l.is_empty() {
                continue;
            }
            let cells: Vec<Cell> = l
                .split(',')
                .map(|c| c.parse::<f64>().map_or_else(|_| Cell::Text(c.to_string()), Cell::Num))
                .collect();
            if cells.len() != t.columns.len() {
                return Err(Error::GridMismatch(format!("row {} has {} cells, expected {}", i + 1, cells.len(), t.columns.len())));
            }
            t.rows.push(cells);
        }
        Ok((manifest, t))
    }
}

/// Table with an `x` column and one column per grid function.
pub fn grids_to_table(x_name: &str, grids: &[(&str, &GridFunction)]) -> Result<Table> {
    let first = grids.first().ok_or_else(|| Error::GridMismatch("no grids".into()))?.1;
    if grids.iter().any(|(_, g)| !g.same_grid(first)) {
        return Err(Error::GridMismatch("grids differ".into()));
    }
    let mut cols = vec![x_name];
    cols.extend(grids.iter().map(|(n, _)| *n));
    let mut t = Table::new(&cols);
    for k in 0..first.len() {
        let mut row = vec![Cell::Num(first.x(k))];
        row.extend(grids.iter().map(|(_, g)| Cell::Num(g.values[k])));
        t.push(row);
    }
    Ok(t)
}

/// Rebuilds a uniform grid function from two numeric columns.
pub fn table_to_grid(t: &Table, x_name: &str, y_name: &str) -> Result<GridFunction> {
    let xs = t.column(x_name)?;
    let ys = t.column(y_name)?;
    if xs.len() < 2 {
        return Err(Error::GridMismatch("need at least two rows".into()));
    }
    let h = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
    if xs.iter().enumerate().any(|(k, x)| (x - (xs[0] + k as f64 * h)).abs() > 1e-9 * h) {
        return Err(Error::GridMismatch(format!("column `{x_name}` is not uniformly spaced")));
    }
    GridFunction::new(xs[0], h, ys)
}
