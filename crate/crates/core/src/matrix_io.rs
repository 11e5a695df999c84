//! Plain-text matrix exchange format.
//!
//! A matrix is a header line `N C` followed by `N` rows of `C`
//! whitespace-separated decimals. A file may hold several matrices; a
//! comment line `# <name>` before a header names the block that follows.
//! Blank lines and other comments are ignored.
//!
//! ```text
//! # box_labels
//! 2 3
//! 1 0 1
//! 0 1 1
//! ```

use std::fmt::Write as _;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::hierarchy::LabelVector;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedMatrix {
    pub name: Option<String>,
    pub values: Array2<f64>,
}

pub fn parse_matrices(text: &str) -> Result<Vec<NamedMatrix>> {
    let mut out = Vec::new();
    let mut pending_name: Option<String> = None;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    while let Some((lineno, line)) = lines.next() {
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if !comment.is_empty() {
                pending_name = Some(comment.to_string());
            }
            continue;
        }
        let dims = parse_row(lineno, line)?;
        let [rows, cols] = dims[..] else {
            return Err(Error::parse(lineno, "matrix header must be `N C`"));
        };
        let as_count = |v: f64| {
            if v >= 0.0 && v.fract() == 0.0 && v < 1e9 {
                Ok(v as usize)
            } else {
                Err(Error::parse(lineno, format!("bad matrix dimension {v}")))
            }
        };
        let (rows, cols) = (as_count(rows)?, as_count(cols)?);
        let mut data = Vec::with_capacity(rows * cols);
        let mut seen = 0;
        while seen < rows {
            let Some((rl, row)) = lines.next() else {
                return Err(Error::parse(lineno, format!("expected {rows} rows, found {seen}")));
            };
            if row.is_empty() || row.starts_with('#') {
                continue;
            }
            let values = parse_row(rl, row)?;
            if values.len() != cols {
                return Err(Error::parse(
                    rl,
                    format!("expected {cols} columns, found {}", values.len()),
                ));
            }
            data.extend(values);
            seen += 1;
        }
        let values = Array2::from_shape_vec((rows, cols), data).expect("shape checked");
        out.push(NamedMatrix {
            name: pending_name.take(),
            values,
        });
    }
    Ok(out)
}

/// Parses a file expected to contain one matrix, or picks the block called
/// `name` from a multi-block file.
pub fn parse_matrix(text: &str, name: Option<&str>) -> Result<Array2<f64>> {
    let blocks = parse_matrices(text)?;
    let found = match name {
        Some(name) => blocks.into_iter().find(|b| b.name.as_deref() == Some(name)),
        None => blocks.into_iter().next(),
    };
    found.map(|b| b.values).ok_or_else(|| {
        Error::parse(
            0,
            match name {
                Some(n) => format!("no matrix block named {n:?}"),
                None => "no matrix found".to_string(),
            },
        )
    })
}

fn parse_row(lineno: usize, line: &str) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(lineno, format!("bad number {tok:?}")))
        })
        .collect()
}

/// Formats a value so that parsing it back yields the same bits.
pub fn format_value(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 {
        "0".to_string()
    } else if (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn write_matrix(out: &mut String, name: Option<&str>, values: &Array2<f64>) {
    if let Some(name) = name {
        let _ = writeln!(out, "# {name}");
    }
    let _ = writeln!(out, "{} {}", values.nrows(), values.ncols());
    for row in values.rows() {
        let line: Vec<String> = row.iter().map(|&v| format_value(v)).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
}

pub fn labels_to_matrix(labels: &Array2<bool>) -> Array2<f64> {
    labels.mapv(|b| if b { 1.0 } else { 0.0 })
}

/// Converts a 0/1 matrix into booleans, rejecting anything else.
pub fn matrix_to_labels(values: &Array2<f64>) -> Result<Array2<bool>> {
    if let Some(bad) = values.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::parse(0, format!("label entry {bad} is not 0 or 1")));
    }
    Ok(values.mapv(|v| v == 1.0))
}

pub fn label_rows(values: &Array2<f64>) -> Result<Vec<LabelVector>> {
    let labels = matrix_to_labels(values)?;
    Ok(labels
        .rows()
        .into_iter()
        .map(|r| LabelVector::new(r.to_vec()))
        .collect())
}

pub fn single_row(values: &Array2<f64>, what: &'static str) -> Result<Vec<f64>> {
    Error::check_dim(what, 1, values.nrows())?;
    Ok(values.row(0).to_vec())
}
