//! Report and plot-data emission. Numbers in CSV files are formatted by the
//! same routine as the JSON report so both carry identical values.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use interdec::io::{to_json_string, ReportFile};
use interdec::IndexSubset;

/// The JSON spelling of a number.
pub fn num(x: f64) -> String {
    serde_json::to_string(&x).expect("f64 always serializes")
}

/// Column-name spelling of a subset: `empty`, `1`, `1_2`.
pub fn subset_key(s: IndexSubset) -> String {
    if s.is_empty() {
        "empty".to_string()
    } else {
        s.one_based()
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join("_")
    }
}

pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut writer =
            csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        writer.write_record(&self.header)?;
        for row in &self.rows {
            writer.write_record(row)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Writes the report to `out`, or to stdout when no path is given.
pub fn emit_report(report: &ReportFile, out: Option<&Path>) -> Result<()> {
    let text = to_json_string(report)?;
    match out {
        Some(path) => {
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))?
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

pub fn write_file<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json_string(value)?).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_match_json() {
        for x in [0.1, 1.0, -2.5e-17, 123456789.125] {
            let parsed: f64 = num(x).parse().unwrap();
            assert_eq!(parsed, x);
        }
    }

    #[test]
    fn subset_keys() {
        assert_eq!(subset_key(IndexSubset::EMPTY), "empty");
        assert_eq!(subset_key(IndexSubset::from_indices([0, 2])), "1_3");
    }
}
