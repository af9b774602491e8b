//! Exact t-SNE: Gaussian affinities calibrated per point to a target
//! perplexity, Student-t low-dimensional affinities, and momentum gradient
//! descent with early exaggeration. O(n^2) memory, guarded.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{N2dError, Result};
use crate::linalg::pairwise_sq_dists;
use crate::manifold::{Embedding, ManifoldKind, Provenance};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub n_components: usize,
    pub n_iter: usize,
    /// Multiplier applied to P for the first `exaggeration_iters` iterations.
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub learning_rate: f64,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    /// Iteration at which momentum switches from initial to final.
    pub momentum_switch_iter: usize,
    pub seed: u64,
    /// O(n^2) memory guard; runs with more samples are refused.
    pub max_points: usize,
}

impl TsneConfig {
    pub fn new(n_components: usize, seed: u64) -> Self {
        TsneConfig {
            perplexity: 30.0,
            n_components,
            n_iter: 1000,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            learning_rate: 200.0,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch_iter: 250,
            seed,
            max_points: 20_000,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.perplexity <= 1.0 || self.perplexity >= n as f64 {
            return Err(N2dError::Precondition(format!(
                "perplexity must satisfy 1 < perplexity < n, got {} with n={n}",
                self.perplexity
            )));
        }
        if self.n_iter < 250 {
            return Err(N2dError::Config("n_iter must be >= 250".into()));
        }
        if self.n_components == 0 {
            return Err(N2dError::Config("n_components must be >= 1".into()));
        }
        if n > self.max_points {
            return Err(N2dError::MemoryGuard {
                what: "exact t-sne".into(),
                n,
                limit: self.max_points,
            });
        }
        Ok(())
    }
}

/// Row-stochastic conditional affinities `p(j|i)` with per-row bandwidth
/// found by bisection so the realized perplexity `exp(H_i)` matches the
/// target within 1e-3 (at most 50 halvings).
pub fn conditional_affinities(dists_sq: &Array2<f64>, perplexity: f64) -> Array2<f64> {
    let n = dists_sq.nrows();
    let mut p = Array2::<f64>::zeros((n, n));
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut beta = 1.0f64;
            let mut lo = 0.0f64;
            let mut hi = f64::INFINITY;
            let mut row = vec![0.0f64; n];
            // kernel with the row minimum factored out for stability
            let mut min_d = f64::INFINITY;
            for j in 0..n {
                if j != i {
                    min_d = min_d.min(dists_sq[[i, j]]);
                }
            }
            for _ in 0..50 {
                let mut sum = 0.0;
                for (j, r) in row.iter_mut().enumerate() {
                    if j == i {
                        *r = 0.0;
                    } else {
                        *r = (-beta * (dists_sq[[i, j]] - min_d)).exp();
                        sum += *r;
                    }
                }
                let mut entropy = 0.0;
                for (j, r) in row.iter_mut().enumerate() {
                    if j != i {
                        *r /= sum;
                        if *r > 0.0 {
                            entropy -= *r * r.ln();
                        }
                    }
                }
                let realized = entropy.exp();
                if (realized - perplexity).abs() < 1e-3 {
                    break;
                }
                if realized > perplexity {
                    lo = beta;
                    beta = if hi.is_infinite() { beta * 2.0 } else { (lo + hi) / 2.0 };
                } else {
                    hi = beta;
                    beta = (lo + hi) / 2.0;
                }
            }
            row
        })
        .collect();
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            p[[i, j]] = v;
        }
    }
    p
}

/// Joint affinities `P = (P_cond + P_cond^T) / (2n)`.
pub fn joint_affinities(dists_sq: &Array2<f64>, perplexity: f64) -> Array2<f64> {
    let cond = conditional_affinities(dists_sq, perplexity);
    let n = cond.nrows();
    let mut p = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            p[[i, j]] = (cond[[i, j]] + cond[[j, i]]) / (2.0 * n as f64);
        }
    }
    p
}

/// KL divergence between the joint affinities and the Student-t affinities
/// of the given layout.
pub fn kl_divergence(p: &Array2<f64>, coords: &Array2<f64>) -> f64 {
    let n = coords.nrows();
    let d2 = pairwise_sq_dists(&coords.view());
    let mut q_unnorm = Array2::<f64>::zeros((n, n));
    let mut z = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let w = 1.0 / (1.0 + d2[[i, j]]);
                q_unnorm[[i, j]] = w;
                z += w;
            }
        }
    }
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            let pij = p[[i, j]];
            if pij > 0.0 && i != j {
                let qij = (q_unnorm[[i, j]] / z).max(1e-300);
                kl += pij * (pij / qij).ln();
            }
        }
    }
    kl
}

/// Runs t-SNE and also reports the KL divergence (against the plain,
/// un-exaggerated P) right after the exaggeration phase and at the end.
pub fn tsne_fit_with_trace(
    emb: &Embedding,
    cfg: &TsneConfig,
) -> Result<(Embedding, Vec<(usize, f64)>)> {
    let n = emb.n_samples();
    cfg.validate(n)?;
    let m = cfg.n_components;

    let d2 = pairwise_sq_dists(&emb.coords.view());
    let p_plain = joint_affinities(&d2, cfg.perplexity);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, 1e-4).unwrap();
    let mut y = Array2::<f64>::zeros((n, m));
    for v in y.iter_mut() {
        *v = normal.sample(&mut rng);
    }
    let mut velocity = Array2::<f64>::zeros((n, m));
    let mut trace = Vec::new();

    for iter in 0..cfg.n_iter {
        let exaggeration = if iter < cfg.exaggeration_iters {
            cfg.early_exaggeration
        } else {
            1.0
        };
        let momentum = if iter < cfg.momentum_switch_iter {
            cfg.initial_momentum
        } else {
            cfg.final_momentum
        };

        // Student-t normalizer, then per-row gradients; the kernel values
        // are recomputed on the fly instead of being materialized.
        let yd2 = pairwise_sq_dists(&y.view());
        // per-row sums reduced sequentially so the total is reproducible
        let row_sums: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut s = 0.0;
                for j in 0..n {
                    if i != j {
                        s += 1.0 / (1.0 + yd2[[i, j]]);
                    }
                }
                s
            })
            .collect();
        let z: f64 = row_sums.iter().sum();

        // grad_i = 4 sum_j (exagg*p_ij - q_ij) w_ij (y_i - y_j)
        let grad_rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut g = vec![0.0f64; m];
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let w = 1.0 / (1.0 + yd2[[i, j]]);
                    let q = w / z;
                    let coeff = 4.0 * (exaggeration * p_plain[[i, j]] - q) * w;
                    for t in 0..m {
                        g[t] += coeff * (y[[i, t]] - y[[j, t]]);
                    }
                }
                g
            })
            .collect();

        for i in 0..n {
            for t in 0..m {
                velocity[[i, t]] =
                    momentum * velocity[[i, t]] - cfg.learning_rate * grad_rows[i][t];
                y[[i, t]] += velocity[[i, t]];
            }
        }
        // re-center to keep the layout bounded
        for t in 0..m {
            let mean = y.column(t).sum() / n as f64;
            y.column_mut(t).mapv_inplace(|v| v - mean);
        }

        if iter + 1 == cfg.exaggeration_iters {
            trace.push((iter + 1, kl_divergence(&p_plain, &y)));
        }
    }
    trace.push((cfg.n_iter, kl_divergence(&p_plain, &y)));

    let out = Embedding::new(y, Provenance::Manifold(ManifoldKind::Tsne))?;
    Ok((out, trace))
}

pub fn tsne_fit(emb: &Embedding, cfg: &TsneConfig) -> Result<Embedding> {
    tsne_fit_with_trace(emb, cfg).map(|(e, _)| e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn blobs(n_per: usize, centers: &[[f64; 4]], seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = n_per * centers.len();
        let mut data = Array2::<f64>::zeros((n, 4));
        let mut labels = vec![0usize; n];
        for i in 0..n {
            let b = i / n_per;
            labels[i] = b;
            for t in 0..4 {
                data[[i, t]] = centers[b][t] + rng.gen_range(-0.3..0.3);
            }
        }
        (data, labels)
    }

    #[test]
    fn realized_perplexity_matches_target() {
        let (data, _) = blobs(40, &[[0.0; 4], [6.0, 0.0, 0.0, 0.0]], 3);
        let d2 = pairwise_sq_dists(&data.view());
        let target = 25.0;
        let cond = conditional_affinities(&d2, target);
        for i in 0..cond.nrows() {
            let mut h = 0.0;
            for j in 0..cond.ncols() {
                let p = cond[[i, j]];
                if p > 0.0 {
                    h -= p * p.ln();
                }
            }
            assert!(
                (h.exp() - target).abs() < 1e-3,
                "row {i}: realized {} vs {target}",
                h.exp()
            );
        }
    }

    #[test]
    fn joint_affinities_symmetric_nonneg_sum_one() {
        let (data, _) = blobs(30, &[[0.0; 4], [5.0, 0.0, 0.0, 0.0]], 7);
        let p = joint_affinities(&pairwise_sq_dists(&data.view()), 20.0);
        let total: f64 = p.iter().sum();
        assert!((total - 1.0).abs() < 1e-10, "sum {total}");
        assert!(p.iter().all(|&v| v >= 0.0));
        for i in 0..p.nrows() {
            for j in 0..p.ncols() {
                assert!((p[[i, j]] - p[[j, i]]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn perplexity_out_of_range_rejected() {
        let (data, _) = blobs(5, &[[0.0; 4]], 1);
        let emb = Embedding::raw(data).unwrap();
        let cfg = TsneConfig {
            perplexity: 5.0,
            ..TsneConfig::new(2, 0)
        };
        assert!(matches!(
            tsne_fit(&emb, &cfg),
            Err(N2dError::Precondition(_))
        ));
    }

    #[test]
    fn memory_guard_trips() {
        let (data, _) = blobs(60, &[[0.0; 4]], 1);
        let emb = Embedding::raw(data).unwrap();
        let cfg = TsneConfig {
            max_points: 10,
            ..TsneConfig::new(2, 0)
        };
        assert!(matches!(
            tsne_fit(&emb, &cfg),
            Err(N2dError::MemoryGuard { .. })
        ));
    }

    #[test]
    fn fixed_seed_is_bit_reproducible() {
        let (data, _) = blobs(25, &[[0.0; 4], [6.0, 0.0, 0.0, 0.0]], 2);
        let emb = Embedding::raw(data).unwrap();
        let cfg = TsneConfig {
            perplexity: 10.0,
            n_iter: 300,
            ..TsneConfig::new(2, 77)
        };
        let a = tsne_fit(&emb, &cfg).unwrap();
        let b = tsne_fit(&emb, &cfg).unwrap();
        assert_eq!(a.coords, b.coords);
    }

    #[test]
    fn kl_decreases_after_exaggeration() {
        let (data, _) = blobs(40, &[[0.0; 4], [8.0, 0.0, 0.0, 0.0]], 11);
        let emb = Embedding::raw(data).unwrap();
        let cfg = TsneConfig {
            perplexity: 15.0,
            n_iter: 600,
            ..TsneConfig::new(2, 5)
        };
        let (_, trace) = tsne_fit_with_trace(&emb, &cfg).unwrap();
        assert_eq!(trace.len(), 2);
        let (it0, kl0) = trace[0];
        let (it1, kl1) = trace[1];
        assert_eq!(it0, 250);
        assert_eq!(it1, 600);
        assert!(kl1 < kl0, "final KL {kl1} should beat post-exaggeration {kl0}");
    }
}
