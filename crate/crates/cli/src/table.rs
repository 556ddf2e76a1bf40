//! Column CSV with a `#` comment header. Values use the shortest round-tripping
//! float format and missing values are written as `NaN`.

use std::fmt::Write;

use tofu::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    /// column-major
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn new() -> Self {
        Self { names: Vec::new(), columns: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, values: Vec<f64>) {
        self.names.push(name.into());
        self.columns.push(values);
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.columns[i].as_slice())
    }

    pub fn render(&self, header: &str) -> String {
        let mut out = header.to_string();
        out += &self.names.join(",");
        out.push('\n');
        let rows = self.columns.iter().map(Vec::len).max().unwrap_or(0);
        for r in 0..rows {
            for (i, c) in self.columns.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}", c.get(r).copied().unwrap_or(f64::NAN));
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let names: Vec<String> = lines
            .next()
            .ok_or_else(|| Error::Config("CSV has no header row".into()))?
            .split(',')
            .map(|s| s.trim().to_string())
            .collect();
        let mut columns = vec![Vec::new(); names.len()];
        for (row, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != names.len() {
                return Err(Error::Config(format!(
                    "CSV row {}: {} cells for {} columns",
                    row + 1,
                    cells.len(),
                    names.len()
                )));
            }
            for (col, cell) in columns.iter_mut().zip(cells) {
                let v = cell
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("CSV row {}: bad number '{cell}'", row + 1)))?;
                col.push(v);
            }
        }
        Ok(Self { names, columns })
    }
}
