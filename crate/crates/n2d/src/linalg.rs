//! Small dense linear-algebra helpers used by the manifold and clustering
//! modules: Cholesky factorization, a cyclic Jacobi eigensolver for symmetric
//! matrices, and block subspace iteration for the leading eigenpairs of large
//! symmetric operators.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{N2dError, Result};

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
/// Returns `None` if a non-positive pivot is encountered.
pub fn cholesky(a: &ArrayView2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l[[i, j]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    Some(l)
}

/// Solves `L x = b` for lower-triangular `L`.
pub fn solve_lower(l: &ArrayView2<f64>, b: &ArrayView1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut x = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[[i, k]] * x[k];
        }
        x[i] = sum / l[[i, i]];
    }
    x
}

/// Log-determinant of a matrix from its Cholesky factor.
pub fn log_det_from_cholesky(l: &ArrayView2<f64>) -> f64 {
    2.0 * (0..l.nrows()).map(|i| l[[i, i]].ln()).sum::<f64>()
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotation.
/// Returns eigenvalues in descending order with matching eigenvector columns.
/// Intended for small/medium matrices (n up to a few thousand).
pub fn jacobi_eigh(a: &ArrayView2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut m = a.to_owned();
    let mut v = Array2::<f64>::eye(n);

    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[[i, j]] * m[[i, j]];
            }
        }
        if off.sqrt() < 1e-14 * (1.0 + frobenius(&m.view())) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[j, j]].partial_cmp(&m[[i, i]]).unwrap());
    let eigenvalues = Array1::from_iter(order.iter().map(|&i| m[[i, i]]));
    let mut eigenvectors = Array2::<f64>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.column_mut(dst).assign(&v.column(src));
    }
    (eigenvalues, eigenvectors)
}

fn frobenius(a: &ArrayView2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Leading eigenpairs of a symmetric operator given only its matrix-vector
/// product, via block subspace iteration with Rayleigh-Ritz extraction.
///
/// `apply` must compute `Y = A X` for a block `X` of shape `n x k`.
/// Converges to the `k` eigenvalues of largest algebraic value provided the
/// operator is positive semidefinite (shift beforehand if it is not).
pub fn subspace_iteration<F>(
    apply: F,
    n: usize,
    k: usize,
    max_iter: usize,
    tol: f64,
    seed: u64,
) -> Result<(Array1<f64>, Array2<f64>)>
where
    F: Fn(&ArrayView2<f64>) -> Array2<f64>,
{
    if k == 0 || k > n {
        return Err(N2dError::Precondition(format!(
            "subspace iteration needs 0 < k <= n, got k={k}, n={n}"
        )));
    }
    // A couple of guard vectors beyond k sharpens convergence of the k-th pair.
    let block = (k + 2).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::<f64>::zeros((n, block));
    for v in x.iter_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    orthonormalize(&mut x);

    let mut ritz = Array1::<f64>::zeros(block);
    let mut converged = false;
    for iter in 0..max_iter {
        let mut y = apply(&x.view());
        orthonormalize(&mut y);
        // Rayleigh-Ritz on the small projected problem.
        let ay = apply(&y.view());
        let small = y.t().dot(&ay);
        let small_sym = 0.5 * (&small + &small.t());
        let (vals, vecs) = jacobi_eigh(&small_sym.view());
        x = y.dot(&vecs);
        // Residual check on the k leading pairs every few sweeps.
        if iter % 5 == 4 || iter == max_iter - 1 {
            let ax = apply(&x.view());
            let mut worst = 0.0f64;
            for j in 0..k {
                let lambda = vals[j];
                let mut res = 0.0;
                for i in 0..n {
                    let r = ax[[i, j]] - lambda * x[[i, j]];
                    res += r * r;
                }
                worst = worst.max(res.sqrt() / lambda.abs().max(1.0));
            }
            ritz = vals;
            if worst < tol {
                converged = true;
                break;
            }
        } else {
            ritz = vals;
        }
    }
    if !converged {
        return Err(N2dError::Numerical(format!(
            "subspace iteration did not reach tolerance {tol} within {max_iter} iterations"
        )));
    }
    let values = ritz.slice(ndarray::s![..k]).to_owned();
    let vectors = x.slice(ndarray::s![.., ..k]).to_owned();
    Ok((values, vectors))
}

/// In-place modified Gram-Schmidt orthonormalization of the columns.
fn orthonormalize(x: &mut Array2<f64>) {
    let (n, k) = x.dim();
    for j in 0..k {
        for prev in 0..j {
            let mut dot = 0.0;
            for i in 0..n {
                dot += x[[i, prev]] * x[[i, j]];
            }
            for i in 0..n {
                let subtrahend = dot * x[[i, prev]];
                x[[i, j]] -= subtrahend;
            }
        }
        let norm = x.column(j).iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-300 {
            x.column_mut(j).mapv_inplace(|v| v / norm);
        }
    }
}

/// Squared Euclidean distances between all row pairs of `a`, computed via
/// the Gram-matrix expansion so the heavy lifting is one matrix product.
/// Values are clamped at zero to absorb cancellation noise.
pub fn pairwise_sq_dists(a: &ArrayView2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let norms: Vec<f64> = (0..n)
        .map(|i| a.row(i).iter().map(|v| v * v).sum::<f64>())
        .collect();
    let gram = a.dot(&a.t());
    let mut d = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                d[[i, j]] = (norms[i] + norms[j] - 2.0 * gram[[i, j]]).max(0.0);
            }
        }
    }
    d
}
