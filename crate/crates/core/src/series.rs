//! Time series of named observables with a `#`-prefixed metadata header,
//! stored as CSV.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeSeries {
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
    metadata: Vec<String>,
}

impl TimeSeries {
    /// New series; the first column is always `t`.
    pub fn new<S: AsRef<str>>(observables: &[S]) -> Self {
        let mut columns = vec!["t".to_string()];
        columns.extend(observables.iter().map(|s| s.as_ref().to_string()));
        Self { columns, rows: Vec::new(), metadata: Vec::new() }
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn metadata(&self) -> &[String] {
        &self.metadata
    }

    /// Appends a metadata line (written as `# line`).
    pub fn push_meta(&mut self, line: impl Into<String>) {
        self.metadata.push(line.into());
    }

    pub fn push(&mut self, t: f64, values: &[f64]) -> Result<()> {
        if values.len() + 1 != self.columns.len() {
            return Err(Error::Config(format!(
                "record has {} values, series has {} observables",
                values.len(),
                self.columns.len() - 1
            )));
        }
        if let Some(last) = self.rows.last() {
            if t <= last[0] {
                return Err(Error::Config(format!("time {t} does not increase past {}", last[0])));
            }
        }
        let mut row = Vec::with_capacity(values.len() + 1);
        row.push(t);
        row.extend_from_slice(values);
        self.rows.push(row);
        Ok(())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r[0]).collect()
    }

    pub fn last(&self, name: &str) -> Option<f64> {
        let k = self.column_index(name)?;
        self.rows.last().map(|r| r[k])
    }

    /// Linear interpolation of a column at time `t` (clamped to the series range).
    pub fn interpolate(&self, name: &str, t: f64) -> Option<f64> {
        let k = self.column_index(name)?;
        let first = self.rows.first()?;
        if t <= first[0] {
            return Some(first[k]);
        }
        let pos = self.rows.partition_point(|r| r[0] < t);
        if pos >= self.rows.len() {
            return self.rows.last().map(|r| r[k]);
        }
        let (a, b) = (&self.rows[pos - 1], &self.rows[pos]);
        let w = (t - a[0]) / (b[0] - a[0]);
        Some(a[k] + w * (b[k] - a[k]))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for line in &self.metadata {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let fields: Vec<String> = row.iter().map(|x| format!("{x:.17e}")).collect();
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut metadata = Vec::new();
        let mut columns: Option<Vec<String>> = None;
        let mut rows = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if let Some(meta) = line.strip_prefix('#') {
                metadata.push(meta.strip_prefix(' ').unwrap_or(meta).to_string());
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            match &columns {
                None => columns = Some(line.split(',').map(|s| s.trim().to_string()).collect()),
                Some(cols) => {
                    let row: std::result::Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
                    let row = row.map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
                    if row.len() != cols.len() {
                        return Err(Error::Config(format!("line {}: expected {} fields", lineno + 1, cols.len())));
                    }
                    rows.push(row);
                }
            }
        }
        let columns = columns.ok_or_else(|| Error::Config("missing CSV header".into()))?;
        if columns.first().map(String::as_str) != Some("t") {
            return Err(Error::Config("first CSV column must be t".into()));
        }
        Ok(Self { columns, rows, metadata })
    }
}
