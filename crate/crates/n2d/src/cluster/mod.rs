//! Shallow clusterers: k-means (baseline and GMM initializer) and a
//! full-covariance Gaussian mixture fitted by EM.

pub mod gmm;
pub mod kmeans;

pub use gmm::{gmm_fit, gmm_fit_with_trace, gmm_predict, GmmConfig, GmmModel};
pub use kmeans::{kmeans_fit, KmeansConfig, KmeansFit};

use ndarray::Array2;

use crate::error::{N2dError, Result};

/// Hard labels plus optional row-stochastic responsibilities.
#[derive(Debug, Clone)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub responsibilities: Option<Array2<f64>>,
}

impl ClusterAssignment {
    pub fn validate(&self) -> Result<()> {
        if let Some(resp) = &self.responsibilities {
            if resp.nrows() != self.labels.len() {
                return Err(N2dError::Consistency(
                    "responsibility rows != label count".into(),
                ));
            }
            for (i, row) in resp.rows().into_iter().enumerate() {
                let sum: f64 = row.sum();
                if (sum - 1.0).abs() > 1e-10 {
                    return Err(N2dError::Consistency(format!(
                        "responsibility row {i} sums to {sum}"
                    )));
                }
                let argmax = argmax_tie_low(row.as_slice().unwrap());
                if argmax != self.labels[i] {
                    return Err(N2dError::Consistency(format!(
                        "hard label {} does not match argmax {argmax} at row {i}",
                        self.labels[i]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Index of the largest value; ties resolve to the lower index.
pub(crate) fn argmax_tie_low(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
