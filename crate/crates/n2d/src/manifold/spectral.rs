//! Spectral layout initialization: leading non-trivial eigenvectors of the
//! symmetric normalized graph Laplacian, computed by subspace iteration on
//! the shifted operator `I + D^{-1/2} W D^{-1/2}` (whose top eigenvectors
//! are the Laplacian's bottom ones).

use ndarray::{Array2, ArrayView2};

use crate::error::{N2dError, Result};
use crate::linalg::subspace_iteration;

/// One undirected edge with a positive weight; endpoints are node ids.
#[derive(Debug, Clone, Copy)]
pub struct WeightedEdge {
    pub i: u32,
    pub j: u32,
    pub weight: f64,
}

/// Computes an `n x m` spectral embedding from a symmetric weighted graph
/// given as undirected edges. Coordinates are rescaled to max |value| = 10.
pub fn spectral_layout(n: usize, edges: &[WeightedEdge], m: usize, seed: u64) -> Result<Array2<f64>> {
    if m + 1 > n {
        return Err(N2dError::Precondition(format!(
            "spectral layout needs m + 1 <= n (m={m}, n={n})"
        )));
    }
    let mut degree = vec![0.0f64; n];
    for e in edges {
        degree[e.i as usize] += e.weight;
        degree[e.j as usize] += e.weight;
    }
    if degree.iter().any(|&d| d <= 0.0) {
        return Err(N2dError::Numerical(
            "graph has an isolated vertex; spectral init undefined".into(),
        ));
    }
    let inv_sqrt_deg: Vec<f64> = degree.iter().map(|&d| 1.0 / d.sqrt()).collect();

    // y = (I + D^{-1/2} W D^{-1/2}) x, applied blockwise.
    let apply = |x: &ArrayView2<f64>| -> Array2<f64> {
        let mut y = x.to_owned();
        for e in edges {
            let (i, j) = (e.i as usize, e.j as usize);
            let w = e.weight * inv_sqrt_deg[i] * inv_sqrt_deg[j];
            for col in 0..x.ncols() {
                y[[i, col]] += w * x[[j, col]];
                y[[j, col]] += w * x[[i, col]];
            }
        }
        y
    };

    let (_, vectors) = subspace_iteration(apply, n, m + 1, 300, 5e-3, seed)?;
    // Drop the trivial top eigenvector; the next m columns are coordinates.
    let mut coords = Array2::<f64>::zeros((n, m));
    for row in 0..n {
        for col in 0..m {
            coords[[row, col]] = vectors[[row, col + 1]];
        }
    }
    let max_abs = coords.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if max_abs > 0.0 {
        coords.mapv_inplace(|v| v * 10.0 / max_abs);
    }
    Ok(coords)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two cliques joined by one weak edge: the first non-trivial
    /// eigenvector must separate the cliques by sign.
    #[test]
    fn separates_two_communities() {
        let mut edges = Vec::new();
        for block in 0..2u32 {
            let base = block * 5;
            for i in 0..5u32 {
                for j in (i + 1)..5u32 {
                    edges.push(WeightedEdge {
                        i: base + i,
                        j: base + j,
                        weight: 1.0,
                    });
                }
            }
        }
        edges.push(WeightedEdge {
            i: 0,
            j: 5,
            weight: 0.01,
        });
        let coords = spectral_layout(10, &edges, 1, 7).unwrap();
        let left: Vec<f64> = (0..5).map(|i| coords[[i, 0]]).collect();
        let right: Vec<f64> = (5..10).map(|i| coords[[i, 0]]).collect();
        assert!(
            left.iter().all(|&v| v > 0.0) && right.iter().all(|&v| v < 0.0)
                || left.iter().all(|&v| v < 0.0) && right.iter().all(|&v| v > 0.0),
            "communities should take opposite signs: {left:?} vs {right:?}"
        );
        let max_abs = coords.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!((max_abs - 10.0).abs() < 1e-9);
    }

    #[test]
    fn isolated_vertex_is_an_error() {
        let edges = vec![WeightedEdge {
            i: 0,
            j: 1,
            weight: 1.0,
        }];
        assert!(spectral_layout(3, &edges, 1, 0).is_err());
    }
}
