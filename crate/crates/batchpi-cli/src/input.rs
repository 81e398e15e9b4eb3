//! CSV inputs: a header row, then one record per unit.

use std::path::Path;

use crate::CliError;

pub struct Table {
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
    source: String,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let source = path.display().to_string();
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| CliError::Input(format!("{source}: {e}")))?;
        let headers = rdr
            .headers()
            .map_err(|e| CliError::Input(format!("{source}: {e}")))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = rdr
            .records()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Input(format!("{source}: {e}")))?;
        Ok(Table { headers, rows, source })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn index(&self, name: &str) -> Result<usize, CliError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Input(format!("{}: missing column `{name}`", self.source)))
    }

    fn cell<T, F: Fn(&str) -> Option<T>>(&self, row: usize, col: usize, parse: F) -> Result<T, CliError> {
        let raw = self.rows[row].get(col).unwrap_or("");
        parse(raw).ok_or_else(|| {
            CliError::Input(format!("{}: row {}, column `{}`: cannot parse `{raw}`", self.source, row + 2, self.headers[col]))
        })
    }

    pub fn has(&self, name: &str) -> bool {
        self.headers.iter().any(|h| h == name)
    }

    pub fn f64_column(&self, name: &str) -> Result<Vec<f64>, CliError> {
        let col = self.index(name)?;
        (0..self.len()).map(|r| self.cell(r, col, |s| s.parse::<f64>().ok().filter(|v| !v.is_nan()))).collect()
    }

    pub fn bool_column(&self, name: &str) -> Result<Vec<bool>, CliError> {
        let col = self.index(name)?;
        (0..self.len())
            .map(|r| {
                self.cell(r, col, |s| match s.to_ascii_lowercase().as_str() {
                    "1" | "true" => Some(true),
                    "0" | "false" => Some(false),
                    _ => None,
                })
            })
            .collect()
    }

    /// Rows of the `feature_*` columns, in header order.
    pub fn features(&self) -> Result<Vec<Vec<f64>>, CliError> {
        let cols: Vec<usize> = (0..self.headers.len()).filter(|&i| self.headers[i].starts_with("feature_")).collect();
        if cols.is_empty() {
            return Err(CliError::Input(format!("{}: no `feature_*` columns", self.source)));
        }
        (0..self.len())
            .map(|r| cols.iter().map(|&c| self.cell(r, c, |s| s.parse::<f64>().ok().filter(|v| v.is_finite()))).collect())
            .collect()
    }
}
