//! Numeric CSV loading.
//!
//! The first row is treated as a header when any of its cells is
//! non-numeric; otherwise columns are implicitly named `col_0..col_{k-1}`
//! so a label column can still be addressed by name.

use std::path::Path;

use ndarray::Array2;

use crate::data::Dataset;
use crate::error::{N2dError, Result};

/// Loads a rectangular numeric CSV. When `label_column` names a column,
/// that column becomes the integer labels (remapped to `[0, c)`) and the
/// remaining columns become features in file order.
pub fn load_csv(path: &Path, label_column: Option<&str>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)?;

    let mut rows: Vec<csv::StringRecord> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| N2dError::Parse {
            row: i,
            msg: e.to_string(),
        })?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        rows.push(rec);
    }
    if rows.is_empty() {
        return Err(N2dError::Format(format!("{}: empty file", path.display())));
    }

    let width = rows[0].len();
    let has_header = rows[0].iter().any(|cell| cell.parse::<f64>().is_err());
    let header: Vec<String> = if has_header {
        rows[0].iter().map(|s| s.to_string()).collect()
    } else {
        (0..width).map(|i| format!("col_{i}")).collect()
    };
    let data_rows = &rows[usize::from(has_header)..];
    if data_rows.is_empty() {
        return Err(N2dError::Format(format!(
            "{}: header only, no data rows",
            path.display()
        )));
    }

    let label_idx = match label_column {
        Some(name) => Some(header.iter().position(|h| h == name).ok_or_else(|| {
            N2dError::Config(format!("label column '{name}' not found in {header:?}"))
        })?),
        None => None,
    };

    let n = data_rows.len();
    let d = width - usize::from(label_idx.is_some());
    let mut features = Array2::<f64>::zeros((n, d));
    let mut raw_labels: Vec<i64> = Vec::with_capacity(if label_idx.is_some() { n } else { 0 });

    for (r, rec) in data_rows.iter().enumerate() {
        let row_no = r + usize::from(has_header);
        if rec.len() != width {
            return Err(N2dError::Parse {
                row: row_no,
                msg: format!("ragged row: expected {width} cells, got {}", rec.len()),
            });
        }
        let mut fcol = 0;
        for (c, cell) in rec.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| N2dError::Parse {
                row: row_no,
                msg: format!("non-numeric cell '{cell}' in column {c}"),
            })?;
            if Some(c) == label_idx {
                if value.fract() != 0.0 {
                    return Err(N2dError::Parse {
                        row: row_no,
                        msg: format!("label cell '{cell}' is not an integer"),
                    });
                }
                raw_labels.push(value as i64);
            } else {
                features[[r, fcol]] = value;
                fcol += 1;
            }
        }
    }

    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    Dataset::new(features, label_idx.map(|_| raw_labels), name, None)
}
