//! Tabular outputs: a CSV file and a whitespace-separated `.dat` twin for
//! gnuplot, both opening with the config hash.

use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    /// Writes `<dir>/<stem>.csv` and `<dir>/<stem>.dat`; returns the CSV path.
    pub fn write(&self, dir: &Path, stem: &str, config_hash: &str) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(dir)?;
        let csv_path = dir.join(format!("{stem}.csv"));
        let mut buf = format!("# config_hash: {config_hash}\n").into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(&self.columns).map_err(csv_error)?;
            for row in &self.rows {
                w.write_record(row).map_err(csv_error)?;
            }
            w.flush()?;
        }
        std::fs::write(&csv_path, buf)?;

        let mut dat = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{stem}.dat")))?);
        writeln!(dat, "# config_hash: {config_hash}")?;
        writeln!(dat, "# {}", self.columns.join(" "))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|c| dat_cell(c)).collect();
            writeln!(dat, "{}", cells.join(" "))?;
        }
        dat.flush()?;
        Ok(csv_path)
    }
}

fn csv_error(e: csv::Error) -> CliError {
    CliError::Runtime(format!("csv: {e}"))
}

/// Quotes cells gnuplot would otherwise split.
fn dat_cell(cell: &str) -> String {
    if cell.is_empty() || cell.contains(char::is_whitespace) || cell.contains('"') {
        format!("\"{}\"", cell.replace('"', "'"))
    } else {
        cell.to_string()
    }
}

/// Shortest round-trip text of a float.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn cell(v: impl Display) -> String {
    v.to_string()
}
