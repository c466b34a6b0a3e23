//! Delimited-text result tables and key-value reports.
//!
//! All persisted results are plain text: tab-separated tables with a single
//! header row, and `key<TAB>value` report files. Floats are written in
//! Rust's shortest round-trip form, so re-reading a table reproduces the
//! exact bit pattern that was computed; that is what makes byte-level
//! determinism checks of whole result bundles meaningful.

use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

/// A rectangular table of floats with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: Vec<S>) -> Self {
        Table {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Render as tab-separated text: one header line, then one line per row.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.columns.join("\t"));
        out.push('\n');
        for row in &self.rows {
            let mut first = true;
            for v in row {
                if !first {
                    out.push('\t');
                }
                let _ = write!(out, "{v}");
                first = false;
            }
            out.push('\n');
        }
        out
    }

    /// Parse the output of [`Table::to_tsv`].
    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Config("empty table text".into()))?;
        let columns: Vec<String> = header.split('\t').map(str::to_owned).collect();
        let mut rows = Vec::new();
        for (k, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split('\t')
                .map(|cell| {
                    cell.parse::<f64>().map_err(|_| {
                        Error::Config(format!(
                            "table row {}: unparseable number {cell:?}",
                            k + 1
                        ))
                    })
                })
                .collect::<Result<_>>()?;
            if row.len() != columns.len() {
                return Err(Error::Config(format!(
                    "table row {}: {} cells for {} columns",
                    k + 1,
                    row.len(),
                    columns.len()
                )));
            }
            rows.push(row);
        }
        Ok(Table { columns, rows })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_tsv(&text)
    }

    /// Index of a named column.
    pub fn column(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Config(format!("table has no column {name:?}")))
    }
}

/// An ordered `key<TAB>value` report; values are free-form strings so both
/// numbers (shortest round-trip form) and labels fit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub entries: Vec<(String, String)>,
}

impl Report {
    pub fn push(&mut self, key: &str, value: impl std::fmt::Display) {
        self.entries.push((key.to_owned(), value.to_string()));
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k}\t{v}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('\t').ok_or_else(|| {
                Error::Config(format!("report line {}: missing tab separator", n + 1))
            })?;
            entries.push((k.to_owned(), v.to_owned()));
        }
        Ok(Report { entries })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Fetch a numeric value by key.
    pub fn get_f64(&self, key: &str) -> Result<f64> {
        let raw = self
            .get(key)
            .ok_or_else(|| Error::Config(format!("report has no key {key:?}")))?;
        raw.parse::<f64>()
            .map_err(|_| Error::Config(format!("report key {key:?} holds non-numeric {raw:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tsv_round_trips_bit_exactly() {
        let mut table = Table::new(vec!["time_s", "value"]);
        // Awkward values: subnormal-ish, negative zero, long fractions.
        table.push_row(vec![0.1 + 0.2, -0.0]);
        table.push_row(vec![1.0 / 3.0, 6.7069804821673715e-3]);
        table.push_row(vec![f64::MIN_POSITIVE, 1e300]);
        let text = table.to_tsv();
        let back = Table::from_tsv(&text).unwrap();
        assert_eq!(back.columns, table.columns);
        for (a, b) in back.rows.iter().flatten().zip(table.rows.iter().flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        // And the re-rendered text is byte-identical.
        assert_eq!(back.to_tsv(), text);
    }

    #[test]
    fn tsv_rejects_malformed_rows() {
        assert!(Table::from_tsv("").is_err());
        assert!(Table::from_tsv("a\tb\n1.0\n").is_err());
        assert!(Table::from_tsv("a\tb\n1.0\tx\n").is_err());
        let ok = Table::from_tsv("a\tb\n1.0\t2.0\n\n").unwrap();
        assert_eq!(ok.rows.len(), 1);
        assert_eq!(ok.column("b").unwrap(), 1);
        assert!(ok.column("c").is_err());
    }

    #[test]
    fn report_round_trips() {
        let mut report = Report::default();
        report.push("t2_rest_s", 74.0e-3);
        report.push("protocol", "rest");
        let text = report.to_text();
        let back = Report::from_text(&text).unwrap();
        assert_eq!(back, report);
        assert_eq!(back.get_f64("t2_rest_s").unwrap(), 74.0e-3);
        assert!(back.get_f64("protocol").is_err());
        assert!(back.get_f64("absent").is_err());
    }
}
