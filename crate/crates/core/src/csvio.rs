//! CSV import/export for paths and tables. Values are written with Rust's
//! shortest round-trip float formatting, so a write/read cycle is lossless.

use crate::paths::{Grid, Path, PathError};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected {expected} columns, found {found}")]
    ColumnCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: could not parse '{token}' as a number")]
    BadNumber { line: usize, token: String },
    #[error("file holds no data rows")]
    Empty,
    #[error("time column is not a uniform grid starting at 0")]
    NonUniformTimes,
    #[error(transparent)]
    Path(#[from] PathError),
}

/// Write named columns of equal length, first column first.
pub fn write_columns(
    path: &std::path::Path,
    headers: &[&str],
    columns: &[&[f64]],
) -> Result<(), CsvError> {
    assert_eq!(headers.len(), columns.len());
    let rows = columns.first().map(|c| c.len()).unwrap_or(0);
    assert!(columns.iter().all(|c| c.len() == rows));
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", headers.join(","))?;
    for r in 0..rows {
        for (i, col) in columns.iter().enumerate() {
            if i > 0 {
                write!(out, ",")?;
            }
            write!(out, "{}", col[r])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Write a single path as `t,value` rows.
pub fn write_path(path: &std::path::Path, p: &Path) -> Result<(), CsvError> {
    let ts: Vec<f64> = p.grid().nodes().collect();
    write_columns(path, &["t", "value"], &[&ts, p.values()])
}

/// Read a `t,value` file (header optional) back into a path; the time
/// column must form a uniform grid starting at 0.
pub fn read_path(path: &std::path::Path) -> Result<Path, CsvError> {
    let reader = BufReader::new(File::open(path)?);
    let mut ts = Vec::new();
    let mut vs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if idx == 0 && fields[0].parse::<f64>().is_err() {
            continue; // header row
        }
        if fields.len() != 2 {
            return Err(CsvError::ColumnCount {
                line: idx + 1,
                expected: 2,
                found: fields.len(),
            });
        }
        let mut parsed = [0.0; 2];
        for (slot, token) in parsed.iter_mut().zip(&fields) {
            *slot = token.trim().parse().map_err(|_| CsvError::BadNumber {
                line: idx + 1,
                token: token.to_string(),
            })?;
        }
        ts.push(parsed[0]);
        vs.push(parsed[1]);
    }
    if ts.len() < 2 {
        return Err(CsvError::Empty);
    }
    let steps = ts.len() - 1;
    let horizon = *ts.last().unwrap();
    let grid = Grid::new(horizon, steps)?;
    let tol = 1e-9 * horizon.abs().max(1.0);
    for (k, &t) in ts.iter().enumerate() {
        if (t - grid.node(k)).abs() > tol {
            return Err(CsvError::NonUniformTimes);
        }
    }
    Ok(Path::new(grid, vs)?)
}
