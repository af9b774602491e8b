//! Dataset loading, validation, and preprocessing.

mod csv_loader;
mod idx;
mod named;

pub use csv_loader::load_csv;
pub use idx::{load_idx, write_idx_bytes, write_idx_label_bytes};
pub use named::{load_pendigits, load_usps};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{N2dError, Result};

/// A loaded dataset: one sample per row, optional ground-truth labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Array2<f64>,
    /// Labels remapped to the contiguous range `[0, c)`.
    pub labels: Option<Vec<usize>>,
    pub name: String,
    /// Declared cluster count for unlabeled data.
    pub c_hint: Option<usize>,
}

impl Dataset {
    /// Builds a dataset, enforcing the type invariants: finite features,
    /// matching label length, contiguous label range, consistent `c_hint`.
    /// Raw labels may be arbitrary integers; they are remapped to `[0, c)`
    /// preserving numeric order.
    pub fn new(
        features: Array2<f64>,
        raw_labels: Option<Vec<i64>>,
        name: impl Into<String>,
        c_hint: Option<usize>,
    ) -> Result<Self> {
        let n = features.nrows();
        let d = features.ncols();
        if n == 0 || d == 0 {
            return Err(N2dError::Precondition(format!(
                "dataset must have n >= 1 and d >= 1, got {n}x{d}"
            )));
        }
        if let Some(bad) = features.iter().position(|v| !v.is_finite()) {
            return Err(N2dError::Precondition(format!(
                "feature value at flat index {bad} is not finite"
            )));
        }
        let labels = match raw_labels {
            Some(raw) => {
                if raw.len() != n {
                    return Err(N2dError::Consistency(format!(
                        "{} samples but {} labels",
                        n,
                        raw.len()
                    )));
                }
                Some(remap_labels(&raw))
            }
            None => None,
        };
        if let (Some(labels), Some(hint)) = (&labels, c_hint) {
            let c = distinct_count(labels);
            if c != hint {
                return Err(N2dError::Consistency(format!(
                    "c_hint {hint} does not match {c} distinct labels"
                )));
            }
        }
        Ok(Dataset {
            features,
            labels,
            name: name.into(),
            c_hint,
        })
    }

    /// Attaches a declared cluster count, re-checking consistency with
    /// any labels present.
    pub fn with_c_hint(mut self, c_hint: Option<usize>) -> Result<Self> {
        if let (Some(labels), Some(hint)) = (&self.labels, c_hint) {
            let c = distinct_count(labels);
            if c != hint {
                return Err(N2dError::Consistency(format!(
                    "c_hint {hint} does not match {c} distinct labels"
                )));
            }
        }
        self.c_hint = c_hint;
        Ok(self)
    }

    /// Concatenates two datasets row-wise (same feature width; labels must
    /// be either present in both or absent in both).
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.n_features() != other.n_features() {
            return Err(N2dError::Consistency(format!(
                "cannot concat {}-dim with {}-dim features",
                self.n_features(),
                other.n_features()
            )));
        }
        let features = ndarray::concatenate(
            ndarray::Axis(0),
            &[self.features.view(), other.features.view()],
        )
        .map_err(|e| N2dError::Consistency(e.to_string()))?;
        let labels = match (&self.labels, &other.labels) {
            (Some(a), Some(b)) => {
                let mut all: Vec<i64> = a.iter().map(|&v| v as i64).collect();
                all.extend(b.iter().map(|&v| v as i64));
                Some(all)
            }
            (None, None) => None,
            _ => {
                return Err(N2dError::Consistency(
                    "cannot concat labeled with unlabeled data".into(),
                ))
            }
        };
        Dataset::new(features, labels, self.name.clone(), None)
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Cluster count from labels when present, else from `c_hint`.
    pub fn cluster_count(&self) -> Option<usize> {
        match &self.labels {
            Some(labels) => Some(distinct_count(labels)),
            None => self.c_hint,
        }
    }
}

/// Remaps arbitrary integer labels onto `[0, c)`, preserving numeric order.
pub fn remap_labels(raw: &[i64]) -> Vec<usize> {
    let mut distinct: Vec<i64> = raw.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    raw.iter()
        .map(|v| distinct.binary_search(v).unwrap())
        .collect()
}

fn distinct_count(labels: &[usize]) -> usize {
    let mut seen: Vec<usize> = labels.to_vec();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// Feature scaling applied before the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PreprocessSpec {
    /// Divide by 255; requires raw values in [0, 255].
    ImageUnitScale,
    /// Map each feature column to [0, 1]; constant columns map to 0.
    #[default]
    PerFeatureMinmax,
    None,
}

/// Applies the preprocessing rule. Labels pass through unchanged.
pub fn preprocess(ds: &Dataset, spec: PreprocessSpec) -> Result<Dataset> {
    let mut features = ds.features.clone();
    match spec {
        PreprocessSpec::None => {}
        PreprocessSpec::ImageUnitScale => {
            if let Some(v) = features.iter().find(|v| **v < 0.0 || **v > 255.0) {
                return Err(N2dError::Precondition(format!(
                    "image_unit_scale requires values in [0, 255], found {v}"
                )));
            }
            features.mapv_inplace(|v| v / 255.0);
        }
        PreprocessSpec::PerFeatureMinmax => {
            for mut col in features.columns_mut() {
                let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let span = hi - lo;
                if span > 0.0 {
                    col.mapv_inplace(|v| (v - lo) / span);
                } else {
                    col.fill(0.0);
                }
            }
        }
    }
    Ok(Dataset {
        features,
        labels: ds.labels.clone(),
        name: ds.name.clone(),
        c_hint: ds.c_hint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn labels_remap_to_contiguous_range() {
        assert_eq!(remap_labels(&[5, 9, 5]), vec![0, 1, 0]);
        assert_eq!(remap_labels(&[3, 1, 2, 1]), vec![2, 0, 1, 0]);
    }

    #[test]
    fn image_unit_scale_full_range() {
        let ds = Dataset::new(array![[255.0, 255.0]], None, "t", None).unwrap();
        let out = preprocess(&ds, PreprocessSpec::ImageUnitScale).unwrap();
        assert!(out.features.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn image_unit_scale_rejects_out_of_range() {
        let ds = Dataset::new(array![[256.0]], None, "t", None).unwrap();
        assert!(preprocess(&ds, PreprocessSpec::ImageUnitScale).is_err());
    }

    #[test]
    fn minmax_maps_columns_to_unit_interval() {
        let ds = Dataset::new(array![[2.0], [4.0], [6.0]], None, "t", None).unwrap();
        let out = preprocess(&ds, PreprocessSpec::PerFeatureMinmax).unwrap();
        assert_eq!(out.features.column(0).to_vec(), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn minmax_constant_column_maps_to_zero() {
        let ds = Dataset::new(array![[7.0], [7.0], [7.0]], None, "t", None).unwrap();
        let out = preprocess(&ds, PreprocessSpec::PerFeatureMinmax).unwrap();
        assert_eq!(out.features.column(0).to_vec(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn minmax_is_idempotent_on_normalized_data() {
        let ds = Dataset::new(array![[0.0, 1.0], [1.0, 0.0], [0.25, 0.75]], None, "t", None)
            .unwrap();
        let once = preprocess(&ds, PreprocessSpec::PerFeatureMinmax).unwrap();
        let twice = preprocess(&once, PreprocessSpec::PerFeatureMinmax).unwrap();
        for (a, b) in once.features.iter().zip(twice.features.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn c_hint_must_match_labels() {
        let feats = array![[0.0], [1.0], [2.0]];
        assert!(Dataset::new(feats.clone(), Some(vec![0, 1, 0]), "t", Some(2)).is_ok());
        assert!(Dataset::new(feats, Some(vec![0, 1, 0]), "t", Some(3)).is_err());
    }
}
