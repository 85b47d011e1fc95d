//! CSV and JSON readers/writers for matrices, label vectors and datasets.

use std::fs::File;
use std::path::Path;

use serde::{de::DeserializeOwned, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::types::{DataKind, Dataset};

/// How floats are written.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NumFormat {
    /// Shortest representation that parses back to the same `f64`.
    RoundTrip,
    /// Twelve significant digits.
    Sig12,
}

/// Format `x` with `digits` significant digits, trimming trailing zeros.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { format!("{x}") };
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..(digits as i32)).contains(&exp) {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{:.*e}", digits - 1, x)
    }
}

fn fmt_num(x: f64, f: NumFormat) -> String {
    match f {
        NumFormat::RoundTrip => format!("{x}"),
        NumFormat::Sig12 => fmt_sig(x, 12),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

fn parse_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), msg: msg.into() }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io_err(path, io),
        other => parse_err(path, format!("{other:?}")),
    }
}

/// Reads a numeric CSV. Returns the header (if `has_header`) and the matrix.
pub fn read_matrix_csv(path: &Path, has_header: bool) -> Result<(Option<Vec<String>>, Mat)> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = if has_header {
        Some(
            rdr.headers()
                .map_err(|e| csv_err(path, e))?
                .iter()
                .map(str::to_string)
                .collect(),
        )
    } else {
        None
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = rec
            .iter()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| parse_err(path, format!("row {}: cannot parse {t:?}", line + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(parse_err(path, "ragged rows"));
    }
    let m = Mat::from_fn(rows.len(), ncols, |i, j| rows[i][j]);
    Ok((header, m))
}

pub fn write_matrix_csv(
    path: &Path,
    m: &Mat,
    header: Option<&[String]>,
    format: NumFormat,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    if let Some(h) = header {
        w.write_record(h).map_err(|e| csv_err(path, e))?;
    }
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt_num(m[(i, j)], format)).collect();
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads a single column of positive integers (labels or group ids).
pub fn read_labels_csv(path: &Path, has_header: bool) -> Result<Vec<usize>> {
    let (_, m) = read_matrix_csv(path, has_header)?;
    if m.ncols() != 1 {
        return Err(parse_err(path, format!("expected one column, found {}", m.ncols())));
    }
    m.iter()
        .map(|&v| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(parse_err(path, format!("{v} is not a non-negative integer")))
            }
        })
        .collect()
}

pub fn write_labels_csv(path: &Path, labels: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for l in labels {
        w.write_record([l.to_string()]).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads observations (and optionally demographics) into a [`Dataset`].
pub fn read_dataset(
    data_path: &Path,
    kind: DataKind,
    has_header: bool,
    demographics_path: Option<&Path>,
) -> Result<Dataset> {
    let (header, y) = read_matrix_csv(data_path, has_header)?;
    let mut ds = Dataset::new(y, kind)?;
    if let Some(h) = header {
        ds = ds.with_node_names(h)?;
    }
    if let Some(dp) = demographics_path {
        ds = ds.with_demographics(read_labels_csv(dp, false)?)?;
    }
    Ok(ds)
}

/// Writes observations with full round-trip precision.
pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    write_matrix_csv(path, data.observations(), data.node_names(), NumFormat::RoundTrip)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    serde_json::to_writer_pretty(file, value).map_err(|e| parse_err(path, e.to_string()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    serde_json::from_reader(file).map_err(|e| parse_err(path, e.to_string()))
}

/// Row-major nested vectors, the JSON shape used for matrices.
pub fn rows_of(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}
