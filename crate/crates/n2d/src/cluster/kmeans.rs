//! Lloyd's k-means with k-means++ seeding and restart selection by
//! within-cluster sum of squares.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::ClusterAssignment;
use crate::error::{N2dError, Result};
use crate::manifold::Embedding;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KmeansConfig {
    pub n_clusters: usize,
    pub n_init: usize,
    pub max_iter: usize,
    /// Lloyd stops when the largest center shift falls below this.
    pub tol: f64,
    pub seed: u64,
}

impl KmeansConfig {
    pub fn new(n_clusters: usize, seed: u64) -> Self {
        KmeansConfig {
            n_clusters,
            n_init: 10,
            max_iter: 300,
            tol: 1e-6,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KmeansFit {
    pub centers: Array2<f64>,
    pub wcss: f64,
    pub n_iter: usize,
    pub assignment: ClusterAssignment,
    /// WCSS measured after each Lloyd assignment step.
    pub wcss_trace: Vec<f64>,
}

pub fn kmeans_fit(emb: &Embedding, cfg: &KmeansConfig) -> Result<KmeansFit> {
    let n = emb.n_samples();
    let c = cfg.n_clusters;
    if c == 0 || c > n {
        return Err(N2dError::Precondition(format!(
            "k-means needs 1 <= c <= n, got c={c}, n={n}"
        )));
    }
    if cfg.n_init == 0 {
        return Err(N2dError::Config("n_init must be >= 1".into()));
    }
    let data = emb.coords.view();
    let runs: Vec<KmeansFit> = (0..cfg.n_init)
        .into_par_iter()
        .map(|restart| {
            let seed = cfg.seed.wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul(restart as u64 + 1));
            single_run(&data, c, cfg.max_iter, cfg.tol, seed)
        })
        .collect();
    // deterministic selection: lowest wcss, ties to the earlier restart
    let best = runs
        .into_iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.wcss.partial_cmp(&b.wcss).unwrap().then(ia.cmp(ib)))
        .map(|(_, fit)| fit)
        .expect("n_init >= 1");
    Ok(best)
}

fn single_run(data: &ArrayView2<f64>, c: usize, max_iter: usize, tol: f64, seed: u64) -> KmeansFit {
    let n = data.nrows();
    let m = data.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = plus_plus_seeding(data, c, &mut rng);
    let mut labels = vec![0usize; n];
    let mut n_iter = 0;

    let mut wcss_trace = Vec::new();
    for iter in 0..max_iter {
        n_iter = iter + 1;
        assign(data, &centers.view(), &mut labels);
        repair_empty_clusters(data, &mut centers, &mut labels);
        wcss_trace.push(wcss_of(data, &centers.view(), &labels));

        // recompute centers
        let mut new_centers = Array2::<f64>::zeros((c, m));
        let mut cluster_counts = vec![0usize; c];
        for (i, &l) in labels.iter().enumerate() {
            cluster_counts[l] += 1;
            for t in 0..m {
                new_centers[[l, t]] += data[[i, t]];
            }
        }
        for k in 0..c {
            if cluster_counts[k] > 0 {
                let inv = 1.0 / cluster_counts[k] as f64;
                new_centers.row_mut(k).mapv_inplace(|v| v * inv);
            } else {
                new_centers.row_mut(k).assign(&centers.row(k));
            }
        }

        let max_shift = (0..c)
            .map(|k| {
                (0..m)
                    .map(|t| (new_centers[[k, t]] - centers[[k, t]]).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0f64, f64::max);
        centers = new_centers;
        if max_shift < tol {
            break;
        }
    }
    assign(data, &centers.view(), &mut labels);
    repair_empty_clusters(data, &mut centers, &mut labels);
    let wcss = wcss_of(data, &centers.view(), &labels);
    wcss_trace.push(wcss);

    KmeansFit {
        centers,
        wcss,
        n_iter,
        assignment: ClusterAssignment {
            labels,
            responsibilities: None,
        },
        wcss_trace,
    }
}

fn wcss_of(data: &ArrayView2<f64>, centers: &ArrayView2<f64>, labels: &[usize]) -> f64 {
    let m = data.ncols();
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            (0..m)
                .map(|t| (data[[i, t]] - centers[[l, t]]).powi(2))
                .sum::<f64>()
        })
        .sum()
}

fn plus_plus_seeding(data: &ArrayView2<f64>, c: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = data.nrows();
    let m = data.ncols();
    let mut centers = Array2::<f64>::zeros((c, m));
    let first = rng.gen_range(0..n);
    centers.row_mut(0).assign(&data.row(first));

    let mut d2 = vec![0.0f64; n];
    for k in 1..c {
        let mut total = 0.0;
        for i in 0..n {
            let mut best = f64::INFINITY;
            for kk in 0..k {
                let d: f64 = (0..m)
                    .map(|t| (data[[i, t]] - centers[[kk, t]]).powi(2))
                    .sum();
                best = best.min(d);
            }
            d2[i] = best;
            total += best;
        }
        let pick = if total > 0.0 {
            let mut threshold = rng.gen_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if threshold < w {
                    chosen = i;
                    break;
                }
                threshold -= w;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centers.row_mut(k).assign(&data.row(pick));
    }
    centers
}

fn assign(data: &ArrayView2<f64>, centers: &ArrayView2<f64>, labels: &mut [usize]) {
    let m = data.ncols();
    let c = centers.nrows();
    labels
        .par_iter_mut()
        .enumerate()
        .for_each(|(i, label)| {
            let mut best_k = 0usize;
            let mut best_d = f64::INFINITY;
            for k in 0..c {
                let mut d = 0.0;
                for t in 0..m {
                    let diff = data[[i, t]] - centers[[k, t]];
                    d += diff * diff;
                }
                if d < best_d {
                    best_d = d;
                    best_k = k;
                }
            }
            *label = best_k;
        });
}

/// An empty cluster is repaired by moving its center onto the point
/// farthest from its assigned center.
fn repair_empty_clusters(data: &ArrayView2<f64>, centers: &mut Array2<f64>, labels: &mut [usize]) {
    let c = centers.nrows();
    let m = data.ncols();
    loop {
        let mut counts = vec![0usize; c];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&cnt| cnt == 0) else {
            return;
        };
        let farthest = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let d: f64 = (0..m)
                    .map(|t| (data[[i, t]] - centers[[l, t]]).powi(2))
                    .sum();
                (i, d)
            })
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .expect("nonempty data");
        centers.row_mut(empty).assign(&data.row(farthest));
        labels[farthest] = empty;
    }
}
