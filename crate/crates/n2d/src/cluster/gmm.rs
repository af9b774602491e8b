//! Full-covariance Gaussian mixture fitted by EM with log-domain
//! responsibilities, k-means initialization, and trace-scaled ridge
//! regularization of the covariances.

use ndarray::{Array1, Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{argmax_tie_low, kmeans_fit, ClusterAssignment, KmeansConfig};
use crate::error::{N2dError, Result};
use crate::linalg::{cholesky, log_det_from_cholesky};
use crate::manifold::Embedding;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmmConfig {
    pub n_components: usize,
    pub n_init: usize,
    pub max_iter: usize,
    /// EM stops when the log-likelihood gain drops below `tol_rel * |LL|`.
    pub tol_rel: f64,
    /// Ridge added to covariance diagonals each M-step, scaled by trace/m.
    pub ridge_scale: f64,
    pub seed: u64,
}

impl GmmConfig {
    pub fn new(n_components: usize, seed: u64) -> Self {
        GmmConfig {
            n_components,
            n_init: 10,
            max_iter: 100,
            tol_rel: 1e-3,
            ridge_scale: 1e-6,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GmmModel {
    pub weights: Array1<f64>,
    pub means: Array2<f64>,
    pub covariances: Vec<Array2<f64>>,
    pub converged: bool,
    pub final_log_likelihood: f64,
}

impl GmmModel {
    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }
}

pub fn gmm_fit(emb: &Embedding, cfg: &GmmConfig) -> Result<(GmmModel, ClusterAssignment)> {
    let n = emb.n_samples();
    let c = cfg.n_components;
    if c == 0 || c > n {
        return Err(N2dError::Precondition(format!(
            "gmm needs 1 <= c <= n, got c={c}, n={n}"
        )));
    }
    if cfg.n_init == 0 {
        return Err(N2dError::Config("n_init must be >= 1".into()));
    }

    let runs: Vec<Result<GmmModel>> = (0..cfg.n_init)
        .into_par_iter()
        .map(|restart| {
            let seed = cfg.seed.wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul(restart as u64 + 1));
            em_single(emb, cfg, seed)
        })
        .collect();

    let mut best: Option<GmmModel> = None;
    let mut last_err = None;
    for run in runs {
        match run {
            Ok(model) => {
                // strict > keeps the earlier restart on ties
                if best
                    .as_ref()
                    .map_or(true, |b| model.final_log_likelihood > b.final_log_likelihood)
                {
                    best = Some(model);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let model = match best {
        Some(m) => m,
        None => return Err(last_err.expect("n_init >= 1")),
    };
    let assignment = gmm_predict(&model, emb)?;
    Ok((model, assignment))
}

/// Responsibilities and hard labels under the given model; ties break to
/// the lower component index.
pub fn gmm_predict(model: &GmmModel, emb: &Embedding) -> Result<ClusterAssignment> {
    if emb.dim() != model.dim() {
        return Err(N2dError::Dimension {
            what: "gmm predict input".into(),
            expected: model.dim(),
            actual: emb.dim(),
        });
    }
    let comps = precompute_components(model)?;
    let (resp, _) = responsibilities(&emb.coords.view(), model, &comps);
    let labels = resp
        .rows()
        .into_iter()
        .map(|r| argmax_tie_low(r.as_slice().unwrap()))
        .collect();
    Ok(ClusterAssignment {
        labels,
        responsibilities: Some(resp),
    })
}

/// Per-epoch EM info exposed for diagnostics and tests.
#[derive(Debug, Clone)]
pub struct EmTrace {
    pub log_likelihoods: Vec<f64>,
}

pub fn gmm_fit_with_trace(
    emb: &Embedding,
    cfg: &GmmConfig,
    seed: u64,
) -> Result<(GmmModel, EmTrace)> {
    em_single_traced(emb, cfg, seed)
}

struct ComponentFactors {
    cholesky: Vec<Array2<f64>>,
    log_norm: Vec<f64>, // -(m ln 2pi + ln det) / 2 + ln weight
}

fn precompute_components(model: &GmmModel) -> Result<ComponentFactors> {
    let m = model.dim();
    let mut chol = Vec::with_capacity(model.n_components());
    let mut log_norm = Vec::with_capacity(model.n_components());
    for (k, cov) in model.covariances.iter().enumerate() {
        let l = cholesky(&cov.view()).ok_or_else(|| {
            N2dError::Numerical(format!("component {k}: covariance not positive definite"))
        })?;
        let log_det = log_det_from_cholesky(&l.view());
        log_norm.push(
            model.weights[k].ln() - 0.5 * (m as f64 * (2.0 * std::f64::consts::PI).ln() + log_det),
        );
        chol.push(l);
    }
    Ok(ComponentFactors {
        cholesky: chol,
        log_norm,
    })
}

/// Log-domain E-step: responsibilities and the total log-likelihood.
fn responsibilities(
    data: &ArrayView2<f64>,
    model: &GmmModel,
    comps: &ComponentFactors,
) -> (Array2<f64>, f64) {
    let n = data.nrows();
    let m = data.ncols();
    let c = model.n_components();

    let rows: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut log_p = vec![0.0f64; c];
            for k in 0..c {
                let l = &comps.cholesky[k];
                // z = L^{-1} (x - mu); quad = |z|^2
                let mut z = vec![0.0f64; m];
                for r in 0..m {
                    let mut s = data[[i, r]] - model.means[[k, r]];
                    for t in 0..r {
                        s -= l[[r, t]] * z[t];
                    }
                    z[r] = s / l[[r, r]];
                }
                let quad: f64 = z.iter().map(|v| v * v).sum();
                log_p[k] = comps.log_norm[k] - 0.5 * quad;
            }
            let max = log_p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + log_p.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            for v in log_p.iter_mut() {
                *v = (*v - lse).exp();
            }
            (log_p, lse)
        })
        .collect();

    let mut resp = Array2::<f64>::zeros((n, c));
    let mut ll = 0.0;
    for (i, (row, lse)) in rows.into_iter().enumerate() {
        for (k, v) in row.into_iter().enumerate() {
            resp[[i, k]] = v;
        }
        ll += lse;
    }
    (resp, ll)
}

fn em_single(emb: &Embedding, cfg: &GmmConfig, seed: u64) -> Result<GmmModel> {
    em_single_traced(emb, cfg, seed).map(|(m, _)| m)
}

fn em_single_traced(emb: &Embedding, cfg: &GmmConfig, seed: u64) -> Result<(GmmModel, EmTrace)> {
    let data = emb.coords.view();
    let n = data.nrows();
    let m = data.ncols();
    let c = cfg.n_components;

    // Initialize from a k-means run.
    let km = kmeans_fit(
        emb,
        &KmeansConfig {
            n_clusters: c,
            n_init: 1,
            max_iter: 100,
            tol: 1e-4,
            seed,
        },
    )?;
    let mut weights = Array1::<f64>::zeros(c);
    let means = km.centers.clone();
    let mut covariances = vec![Array2::<f64>::zeros((m, m)); c];
    {
        let labels = &km.assignment.labels;
        let mut counts = vec![0usize; c];
        for &l in labels {
            counts[l] += 1;
        }
        for k in 0..c {
            weights[k] = counts[k] as f64 / n as f64;
        }
        for (i, &l) in labels.iter().enumerate() {
            for r in 0..m {
                for t in 0..m {
                    covariances[l][[r, t]] +=
                        (data[[i, r]] - means[[l, r]]) * (data[[i, t]] - means[[l, t]]);
                }
            }
        }
        for (k, cov) in covariances.iter_mut().enumerate() {
            let denom = counts[k].max(1) as f64;
            cov.mapv_inplace(|v| v / denom);
            apply_ridge(cov, cfg.ridge_scale);
        }
    }

    let mut model = GmmModel {
        weights,
        means,
        covariances,
        converged: false,
        final_log_likelihood: f64::NEG_INFINITY,
    };
    let mut prev_ll = f64::NEG_INFINITY;
    let mut trace = Vec::new();

    for _iter in 0..cfg.max_iter {
        let comps = factor_with_escalation(&mut model, cfg.ridge_scale)?;
        let (resp, ll) = responsibilities(&data, &model, &comps);
        trace.push(ll);
        model.final_log_likelihood = ll;
        if prev_ll.is_finite() {
            let gain = ll - prev_ll;
            if gain < cfg.tol_rel * ll.abs() {
                model.converged = true;
                break;
            }
        }
        prev_ll = ll;

        // M-step
        let nk: Vec<f64> = (0..c).map(|k| resp.column(k).sum()).collect();
        for k in 0..c {
            model.weights[k] = nk[k] / n as f64;
        }
        for k in 0..c {
            for t in 0..m {
                let mut s = 0.0;
                for i in 0..n {
                    s += resp[[i, k]] * data[[i, t]];
                }
                model.means[[k, t]] = s / nk[k];
            }
        }
        let new_covs: Vec<Array2<f64>> = (0..c)
            .into_par_iter()
            .map(|k| {
                let mut cov = Array2::<f64>::zeros((m, m));
                for i in 0..n {
                    let r_ik = resp[[i, k]];
                    if r_ik == 0.0 {
                        continue;
                    }
                    for r in 0..m {
                        let dr = data[[i, r]] - model.means[[k, r]];
                        for t in r..m {
                            cov[[r, t]] += r_ik * dr * (data[[i, t]] - model.means[[k, t]]);
                        }
                    }
                }
                for r in 0..m {
                    for t in 0..r {
                        cov[[r, t]] = cov[[t, r]];
                    }
                }
                cov.mapv_inplace(|v| v / nk[k]);
                apply_ridge(&mut cov, cfg.ridge_scale);
                cov
            })
            .collect();
        model.covariances = new_covs;
    }

    Ok((model, EmTrace { log_likelihoods: trace }))
}

/// Saves a fitted mixture in the shared container format.
pub fn save_gmm(path: &std::path::Path, model: &GmmModel) -> Result<()> {
    let meta = serde_json::json!({
        "converged": model.converged,
        "final_log_likelihood": model.final_log_likelihood,
    });
    let mut c = crate::io::Container::new("gmm", meta);
    c.push(
        "weights",
        model.weights.clone().insert_axis(ndarray::Axis(0)),
    );
    c.push("means", model.means.clone());
    for (k, cov) in model.covariances.iter().enumerate() {
        c.push(format!("cov{k}"), cov.clone());
    }
    crate::io::save_container(path, &c)
}

pub fn load_gmm(path: &std::path::Path) -> Result<GmmModel> {
    let c = crate::io::load_container(path)?;
    if c.kind != "gmm" {
        return Err(N2dError::Format(format!(
            "expected gmm container, found '{}'",
            c.kind
        )));
    }
    let weights = c.tensor("weights")?.row(0).to_owned();
    let means = c.tensor("means")?.clone();
    let covariances = (0..weights.len())
        .map(|k| c.tensor(&format!("cov{k}")).cloned())
        .collect::<Result<Vec<_>>>()?;
    Ok(GmmModel {
        weights,
        means,
        covariances,
        converged: c.meta["converged"].as_bool().unwrap_or(false),
        final_log_likelihood: c.meta["final_log_likelihood"].as_f64().unwrap_or(f64::NAN),
    })
}

/// Adds `scale * trace(cov)/m` to the diagonal (with an absolute floor for
/// fully degenerate scatter).
fn apply_ridge(cov: &mut Array2<f64>, scale: f64) {
    let m = cov.nrows();
    let trace: f64 = (0..m).map(|i| cov[[i, i]]).sum();
    let ridge = if trace > 0.0 {
        scale * trace / m as f64
    } else {
        scale
    };
    for i in 0..m {
        cov[[i, i]] += ridge;
    }
}

/// Cholesky-factors every component, escalating the ridge by 10x (up to 3
/// times) when a covariance is singular despite regularization.
fn factor_with_escalation(model: &mut GmmModel, ridge_scale: f64) -> Result<ComponentFactors> {
    let mut attempt = 0i32;
    loop {
        match precompute_components(model) {
            Ok(c) => return Ok(c),
            Err(e) => {
                if attempt >= 3 {
                    return Err(N2dError::Numerical(format!(
                        "covariance stayed singular after {attempt} ridge escalations: {e}"
                    )));
                }
                let escalated = ridge_scale * 10f64.powi(attempt + 1);
                for cov in model.covariances.iter_mut() {
                    apply_ridge(cov, escalated);
                }
                attempt += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn two_gaussians(n_per: usize, sep: f64, seed: u64) -> (Embedding, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut data = Array2::<f64>::zeros((2 * n_per, 2));
        let mut labels = vec![0usize; 2 * n_per];
        for i in 0..2 * n_per {
            let b = i / n_per;
            labels[i] = b;
            data[[i, 0]] = normal.sample(&mut rng) + if b == 0 { 0.0 } else { sep };
            data[[i, 1]] = normal.sample(&mut rng);
        }
        (Embedding::raw(data).unwrap(), labels)
    }

    #[test]
    fn recovers_two_separated_gaussians() {
        let (emb, truth) = two_gaussians(500, 8.0, 3);
        let cfg = GmmConfig {
            n_init: 3,
            ..GmmConfig::new(2, 11)
        };
        let (model, assignment) = gmm_fit(&emb, &cfg).unwrap();
        let (acc, _) = crate::metrics::accuracy(&truth, &assignment.labels).unwrap();
        assert_eq!(acc, 1.0);
        // means near (0,0) and (8,0) in some order
        let mut mean_x: Vec<f64> = (0..2).map(|k| model.means[[k, 0]]).collect();
        mean_x.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((mean_x[0] - 0.0).abs() < 0.1, "mean {}", mean_x[0]);
        assert!((mean_x[1] - 8.0).abs() < 0.1, "mean {}", mean_x[1]);
    }

    #[test]
    fn single_component_closed_form() {
        let emb = Embedding::raw(array![
            [1.0, 2.0],
            [3.0, 4.0],
            [5.0, 0.0],
            [7.0, 6.0]
        ])
        .unwrap();
        let cfg = GmmConfig {
            n_init: 1,
            ..GmmConfig::new(1, 5)
        };
        let (model, _) = gmm_fit(&emb, &cfg).unwrap();
        // sample mean
        assert!((model.means[[0, 0]] - 4.0).abs() < 1e-12);
        assert!((model.means[[0, 1]] - 3.0).abs() < 1e-12);
        // biased sample covariance + trace-scaled ridge
        let data = emb.coords.view();
        let mut cov = Array2::<f64>::zeros((2, 2));
        for i in 0..4 {
            for r in 0..2 {
                for t in 0..2 {
                    cov[[r, t]] += (data[[i, r]] - model.means[[0, r]])
                        * (data[[i, t]] - model.means[[0, t]]);
                }
            }
        }
        cov.mapv_inplace(|v| v / 4.0);
        let ridge = 1e-6 * (cov[[0, 0]] + cov[[1, 1]]) / 2.0;
        cov[[0, 0]] += ridge;
        cov[[1, 1]] += ridge;
        for r in 0..2 {
            for t in 0..2 {
                assert!((model.covariances[0][[r, t]] - cov[[r, t]]).abs() < 1e-9);
            }
        }
        assert!((model.weights[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_likelihood_monotone_under_em() {
        for seed in 0..10u64 {
            let (emb, _) = two_gaussians(100, 3.0, seed);
            let cfg = GmmConfig {
                n_init: 1,
                tol_rel: 0.0, // run all iterations
                max_iter: 40,
                ..GmmConfig::new(3, seed)
            };
            let (_, trace) = gmm_fit_with_trace(&emb, &cfg, seed).unwrap();
            for w in trace.log_likelihoods.windows(2) {
                assert!(
                    w[1] >= w[0] - 1e-8,
                    "LL decreased: {} -> {} (seed {seed})",
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn responsibilities_are_row_stochastic() {
        let (emb, _) = two_gaussians(200, 4.0, 9);
        let (_, assignment) = gmm_fit(&emb, &GmmConfig::new(2, 1)).unwrap();
        assignment.validate().unwrap();
        let resp = assignment.responsibilities.unwrap();
        assert!(resp.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn predict_on_training_data_matches_fit_assignment() {
        let (emb, _) = two_gaussians(150, 5.0, 21);
        let (model, assignment) = gmm_fit(&emb, &GmmConfig::new(2, 3)).unwrap();
        let again = gmm_predict(&model, &emb).unwrap();
        assert_eq!(assignment.labels, again.labels);
    }

    #[test]
    fn predict_tie_goes_to_lower_component() {
        // two identical components; every point ties
        let model = GmmModel {
            weights: array![0.5, 0.5],
            means: array![[0.0, 0.0], [0.0, 0.0]],
            covariances: vec![Array2::eye(2), Array2::eye(2)],
            converged: true,
            final_log_likelihood: 0.0,
        };
        let emb = Embedding::raw(array![[1.0, 1.0], [0.0, 0.0]]).unwrap();
        let assignment = gmm_predict(&model, &emb).unwrap();
        assert_eq!(assignment.labels, vec![0, 0]);
    }

    #[test]
    fn point_at_component_mean_wins() {
        let model = GmmModel {
            weights: array![0.5, 0.5],
            means: array![[0.0, 0.0], [10.0, 0.0]],
            covariances: vec![Array2::eye(2), Array2::eye(2)],
            converged: true,
            final_log_likelihood: 0.0,
        };
        let emb = Embedding::raw(array![[10.0, 0.0]]).unwrap();
        let assignment = gmm_predict(&model, &emb).unwrap();
        assert_eq!(assignment.labels, vec![1]);
    }

    #[test]
    fn permuting_components_permutes_labels_only() {
        let (emb, truth) = two_gaussians(120, 6.0, 31);
        let (model, assignment) = gmm_fit(&emb, &GmmConfig::new(2, 7)).unwrap();
        let permuted = GmmModel {
            weights: array![model.weights[1], model.weights[0]],
            means: ndarray::stack![
                ndarray::Axis(0),
                model.means.row(1),
                model.means.row(0)
            ],
            covariances: vec![model.covariances[1].clone(), model.covariances[0].clone()],
            converged: model.converged,
            final_log_likelihood: model.final_log_likelihood,
        };
        let swapped = gmm_predict(&permuted, &emb).unwrap();
        let flipped: Vec<usize> = swapped.labels.iter().map(|&l| 1 - l).collect();
        assert_eq!(assignment.labels, flipped);
        let (acc_a, _) = crate::metrics::accuracy(&truth, &assignment.labels).unwrap();
        let (acc_b, _) = crate::metrics::accuracy(&truth, &swapped.labels).unwrap();
        assert_eq!(acc_a, acc_b);
        let nmi_a = crate::metrics::nmi(&truth, &assignment.labels).unwrap();
        let nmi_b = crate::metrics::nmi(&truth, &swapped.labels).unwrap();
        assert!((nmi_a - nmi_b).abs() < 1e-12);
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let model = GmmModel {
            weights: array![1.0],
            means: array![[0.0, 0.0]],
            covariances: vec![Array2::eye(2)],
            converged: true,
            final_log_likelihood: 0.0,
        };
        let emb = Embedding::raw(array![[1.0, 2.0, 3.0]]).unwrap();
        assert!(gmm_predict(&model, &emb).is_err());
    }

    #[test]
    fn weights_sum_to_one_and_covs_symmetric() {
        let (emb, _) = two_gaussians(200, 2.0, 13);
        let (model, _) = gmm_fit(&emb, &GmmConfig::new(3, 2)).unwrap();
        let total: f64 = model.weights.sum();
        assert!((total - 1.0).abs() < 1e-10);
        assert!(model.weights.iter().all(|&w| w > 0.0));
        for cov in &model.covariances {
            for r in 0..cov.nrows() {
                for t in 0..cov.ncols() {
                    assert!((cov[[r, t]] - cov[[t, r]]).abs() < 1e-10);
                }
            }
        }
    }
}
