//! Loaders for the bundled benchmark datasets under `data/`.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::data::Dataset;
use crate::error::{N2dError, Result};

/// Loads the UCI pendigits dataset from a directory containing
/// `pendigits.tra` and `pendigits.tes` (comma-separated, 16 features and a
/// trailing digit label per row). Train and test portions are concatenated,
/// giving 10992 samples.
pub fn load_pendigits(dir: &Path) -> Result<Dataset> {
    let mut rows: Vec<(Vec<f64>, i64)> = Vec::new();
    for file in ["pendigits.tra", "pendigits.tes"] {
        let text = fs::read_to_string(dir.join(file))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let cells: Vec<f64> = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| N2dError::Parse {
                    row: i,
                    msg: format!("{file}: {e}"),
                })?;
            if cells.len() != 17 {
                return Err(N2dError::Parse {
                    row: i,
                    msg: format!("{file}: expected 17 fields, got {}", cells.len()),
                });
            }
            rows.push((cells[..16].to_vec(), cells[16] as i64));
        }
    }
    let n = rows.len();
    let features = Array2::from_shape_fn((n, 16), |(i, j)| rows[i].0[j]);
    let labels: Vec<i64> = rows.iter().map(|r| r.1).collect();
    Dataset::new(features, Some(labels), "pendigits", None)
}

/// Loads the USPS digits dataset from a directory containing
/// `usps_train.jf` and `usps_test.jf`. Each data line holds the class label
/// followed by 256 gray values; the first line is a header and a trailing
/// marker line is ignored. Train and test are concatenated (9298 samples).
pub fn load_usps(dir: &Path) -> Result<Dataset> {
    let mut rows: Vec<(Vec<f64>, i64)> = Vec::new();
    for file in ["usps_train.jf", "usps_test.jf"] {
        let text = fs::read_to_string(dir.join(file))?;
        for (i, line) in text.lines().enumerate().skip(1) {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() < 257 {
                continue; // trailer or blank line
            }
            let mut values = fields
                .iter()
                .map(|c| c.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| N2dError::Parse {
                    row: i,
                    msg: format!("{file}: {e}"),
                })?;
            let label = values.remove(0);
            rows.push((values, label as i64));
        }
    }
    let n = rows.len();
    if n == 0 {
        return Err(N2dError::Format("usps files contained no data rows".into()));
    }
    let d = rows[0].0.len();
    let features = Array2::from_shape_fn((n, d), |(i, j)| rows[i].0[j]);
    let labels: Vec<i64> = rows.iter().map(|r| r.1).collect();
    Dataset::new(features, Some(labels), "usps", None)
}
