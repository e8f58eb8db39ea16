//! Labelled tab-separated matrices.
//!
//! The first row holds a corner label followed by column labels; every later
//! row holds a row label followed by values. Reals are written with 17
//! significant digits so that reading them back is exact.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use super::{read_to_string, write_atomic};
use crate::error::{Error, Result};
use crate::model::{AssociationMatrix, LatentStateMatrix, ObservedData};

/// Round-trip exact text form of a real.
pub fn format_real(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "NaN".to_string()
    } else if v > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

pub fn parse_real(s: &str) -> Option<f64> {
    match s {
        "NaN" | "nan" => Some(f64::NAN),
        "inf" | "Inf" => Some(f64::INFINITY),
        "-inf" | "-Inf" => Some(f64::NEG_INFINITY),
        _ => s.parse().ok(),
    }
}

/// A matrix with its labels as read from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub corner: String,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub values: DMatrix<f64>,
}

/// Renders a labelled table; `cell(r, c)` formats one value.
pub fn render(
    corner: &str,
    row_labels: &[String],
    col_labels: &[String],
    mut cell: impl FnMut(usize, usize) -> String,
) -> String {
    let mut out = String::new();
    out.push_str(corner);
    for c in col_labels {
        out.push('\t');
        out.push_str(c);
    }
    out.push('\n');
    for (r, label) in row_labels.iter().enumerate() {
        out.push_str(label);
        for c in 0..col_labels.len() {
            out.push('\t');
            out.push_str(&cell(r, c));
        }
        out.push('\n');
    }
    out
}

pub fn labels(prefix: &str, count: usize) -> Vec<String> {
    (1..=count).map(|k| format!("{prefix}{k}")).collect()
}

pub fn write_real_matrix(
    path: &Path,
    corner: &str,
    row_labels: &[String],
    col_labels: &[String],
    values: &DMatrix<f64>,
) -> Result<()> {
    let text = render(corner, row_labels, col_labels, |r, c| {
        format_real(values[(r, c)])
    });
    write_atomic(path, text.as_bytes())
}

pub fn write_states(path: &Path, xi: &LatentStateMatrix) -> Result<()> {
    let text = render(
        "sample",
        &labels("s", xi.n_samples()),
        &labels("p", xi.n_probes()),
        |r, c| xi.get(r, c).to_string(),
    );
    write_atomic(path, text.as_bytes())
}

pub fn write_associations(path: &Path, r: &AssociationMatrix) -> Result<()> {
    let text = render(
        "gene",
        &labels("g", r.n_genes()),
        &labels("p", r.n_probes()),
        |g, m| u8::from(r.get(g, m)).to_string(),
    );
    write_atomic(path, text.as_bytes())
}

/// Parses a labelled table from text; `path` is only used in messages.
pub fn parse_table(path: &Path, text: &str) -> Result<Table> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg: "empty file".into(),
    })?;
    let mut head = header.split('\t');
    let corner = head.next().unwrap_or_default().to_string();
    let col_labels: Vec<String> = head.map(str::to_string).collect();
    let mut row_labels = Vec::new();
    let mut data = Vec::new();
    for (k, line) in lines {
        let mut fields = line.split('\t');
        row_labels.push(fields.next().unwrap_or_default().to_string());
        let mut count = 0;
        for f in fields {
            let v = parse_real(f.trim()).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: k + 1,
                msg: format!("not a number: {f:?}"),
            })?;
            data.push(v);
            count += 1;
        }
        if count != col_labels.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: k + 1,
                msg: format!("{count} values for {} columns", col_labels.len()),
            });
        }
    }
    let values = DMatrix::from_row_slice(row_labels.len(), col_labels.len(), &data);
    Ok(Table {
        corner,
        row_labels,
        col_labels,
        values,
    })
}

pub fn read_table(path: &Path) -> Result<Table> {
    parse_table(path, &read_to_string(path)?)
}

fn integral(path: &Path, v: f64, what: &str) -> Result<u8> {
    if v.fract() == 0.0 && (0.0..=255.0).contains(&v) {
        Ok(v as u8)
    } else {
        Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: format!("{what} value {v} is not a small integer"),
        })
    }
}

pub fn read_states(path: &Path) -> Result<LatentStateMatrix> {
    let t = read_table(path)?;
    let rows = (0..t.values.nrows())
        .map(|i| {
            (0..t.values.ncols())
                .map(|m| integral(path, t.values[(i, m)], "state"))
                .collect::<Result<Vec<u8>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    LatentStateMatrix::from_rows(&rows)
}

pub fn read_associations(path: &Path) -> Result<AssociationMatrix> {
    let t = read_table(path)?;
    let rows = (0..t.values.nrows())
        .map(|g| {
            (0..t.values.ncols())
                .map(|m| integral(path, t.values[(g, m)], "association"))
                .collect::<Result<Vec<u8>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    AssociationMatrix::from_rows(&rows)
}

/// Long table `gene, probe, value`, one row per listed cell (1-based indices).
pub fn render_long(
    header: [&str; 3],
    rows: impl Iterator<Item = (usize, usize, String)>,
) -> String {
    let mut out = format!("{}\t{}\t{}\n", header[0], header[1], header[2]);
    for (g, m, v) in rows {
        let _ = writeln!(out, "{}\t{}\t{}", g + 1, m + 1, v);
    }
    out
}

/// Probe positions as a one-column table.
pub fn write_positions(path: &Path, positions: &[f64]) -> Result<()> {
    let values = DMatrix::from_column_slice(positions.len(), 1, positions);
    write_real_matrix(
        path,
        "probe",
        &labels("p", positions.len()),
        &["position".to_string()],
        &values,
    )
}

pub fn read_positions(path: &Path) -> Result<Vec<f64>> {
    let t = read_table(path)?;
    if t.values.ncols() != 1 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("expected one position column, found {}", t.values.ncols()),
        });
    }
    Ok(t.values.column(0).iter().copied().collect())
}

/// Reads responses, log-ratios and positions. Without an explicit fragment
/// length the span of the probes is used.
pub fn read_data(
    y_path: &Path,
    x_path: &Path,
    positions_path: &Path,
    fragment_length: Option<f64>,
) -> Result<ObservedData> {
    let y = read_table(y_path)?.values;
    let x = read_table(x_path)?.values;
    let positions = read_positions(positions_path)?;
    let span = match (positions.first(), positions.last()) {
        (Some(a), Some(b)) => b - a,
        _ => 0.0,
    };
    ObservedData::new(y, x, positions, fragment_length.unwrap_or(span))
}
