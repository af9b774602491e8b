//! Isomap: geodesic distances over a kNN graph followed by classical
//! multidimensional scaling of the double-centered squared-distance matrix.

use std::cmp::Ordering as CmpOrdering;
use std::collections::BinaryHeap;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{N2dError, Result};
use crate::linalg::{jacobi_eigh, subspace_iteration};
use crate::manifold::knn::{knn_graph, KnnMode};
use crate::manifold::{Embedding, ManifoldKind, Provenance};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IsomapConfig {
    pub n_neighbors: usize,
    pub n_components: usize,
    /// O(n^2) memory guard; runs with more samples are refused.
    pub max_points: usize,
}

impl IsomapConfig {
    pub fn new(n_components: usize) -> Self {
        IsomapConfig {
            n_neighbors: 5,
            n_components,
            max_points: 30_000,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.n_neighbors == 0 || self.n_neighbors >= n {
            return Err(N2dError::Config(format!(
                "n_neighbors must satisfy 1 <= k < n, got k={} n={n}",
                self.n_neighbors
            )));
        }
        if self.n_components == 0 {
            return Err(N2dError::Config("n_components must be >= 1".into()));
        }
        if n > self.max_points {
            return Err(N2dError::MemoryGuard {
                what: "isomap".into(),
                n,
                limit: self.max_points,
            });
        }
        Ok(())
    }
}

/// Diagnostics from a fit: how many inter-component bridges were added and
/// how many output dimensions had to be zero-padded for lack of positive
/// eigenvalues.
#[derive(Debug, Clone, Default)]
pub struct IsomapDetail {
    pub bridges_added: usize,
    pub padded_dims: usize,
}

pub fn isomap_fit(emb: &Embedding, cfg: &IsomapConfig) -> Result<Embedding> {
    isomap_fit_detailed(emb, cfg).map(|(e, _)| e)
}

pub fn isomap_fit_detailed(emb: &Embedding, cfg: &IsomapConfig) -> Result<(Embedding, IsomapDetail)> {
    let n = emb.n_samples();
    cfg.validate(n)?;
    let mut detail = IsomapDetail::default();

    // Undirected adjacency: union of directed kNN edges, weight = distance.
    let graph = knn_graph(emb, cfg.n_neighbors, KnnMode::Exact)?;
    let mut adjacency: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
    for (i, (nbrs, dists)) in graph.indices.iter().zip(graph.distances.iter()).enumerate() {
        for (&j, &d) in nbrs.iter().zip(dists.iter()) {
            add_undirected(&mut adjacency, i as u32, j, d);
        }
    }
    detail.bridges_added = bridge_components(&emb.coords.view(), &mut adjacency)?;

    let geodesic = geodesic_distances(&adjacency)?;
    let (coords, padded) = classical_mds(&geodesic, cfg.n_components, emb.n_samples() as u64)?;
    detail.padded_dims = padded;
    let out = Embedding::new(coords, Provenance::Manifold(ManifoldKind::Isomap))?;
    Ok((out, detail))
}

fn add_undirected(adjacency: &mut [Vec<(u32, f64)>], i: u32, j: u32, d: f64) {
    if !adjacency[i as usize].iter().any(|&(t, _)| t == j) {
        adjacency[i as usize].push((j, d));
    }
    if !adjacency[j as usize].iter().any(|&(t, _)| t == i) {
        adjacency[j as usize].push((i, d));
    }
}

/// Connects a disconnected graph by repeatedly adding the globally shortest
/// edge between two components. Returns the number of edges added.
fn bridge_components(data: &ArrayView2<f64>, adjacency: &mut [Vec<(u32, f64)>]) -> Result<usize> {
    let n = adjacency.len();
    let mut added = 0;
    loop {
        let comp = component_labels(adjacency);
        let n_comps = comp.iter().max().unwrap() + 1;
        if n_comps == 1 {
            return Ok(added);
        }
        // shortest inter-component pair, ties broken by (i, j)
        let best = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut local: Option<(f64, u32, u32)> = None;
                for j in 0..n {
                    if comp[i] != comp[j] {
                        let d: f64 = data
                            .row(i)
                            .iter()
                            .zip(data.row(j).iter())
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>()
                            .sqrt();
                        let cand = (d, i as u32, j as u32);
                        if local.map_or(true, |b| cand_lt(cand, b)) {
                            local = Some(cand);
                        }
                    }
                }
                local
            })
            .reduce(
                || None,
                |a, b| match (a, b) {
                    (None, x) | (x, None) => x,
                    (Some(x), Some(y)) => Some(if cand_lt(x, y) { x } else { y }),
                },
            );
        let (d, i, j) = best.ok_or_else(|| {
            N2dError::Numerical("no inter-component edge found while bridging".into())
        })?;
        add_undirected(adjacency, i, j, d);
        added += 1;
    }
}

fn cand_lt(a: (f64, u32, u32), b: (f64, u32, u32)) -> bool {
    (a.0, a.1, a.2) < (b.0, b.1, b.2)
}

fn component_labels(adjacency: &[Vec<(u32, f64)>]) -> Vec<usize> {
    let n = adjacency.len();
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        stack.push(start);
        label[start] = next;
        while let Some(node) = stack.pop() {
            for &(nb, _) in &adjacency[node] {
                if label[nb as usize] == usize::MAX {
                    label[nb as usize] = next;
                    stack.push(nb as usize);
                }
            }
        }
        next += 1;
    }
    label
}

#[derive(PartialEq)]
struct HeapEntry(f64, u32);

impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<CmpOrdering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> CmpOrdering {
        // reversed: BinaryHeap is a max-heap, we need the smallest distance
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

/// All-pairs shortest paths by per-source Dijkstra over the weighted graph.
fn geodesic_distances(adjacency: &[Vec<(u32, f64)>]) -> Result<Array2<f64>> {
    let n = adjacency.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|src| {
            let mut dist = vec![f64::INFINITY; n];
            let mut heap = BinaryHeap::new();
            dist[src] = 0.0;
            heap.push(HeapEntry(0.0, src as u32));
            while let Some(HeapEntry(d, node)) = heap.pop() {
                if d > dist[node as usize] {
                    continue;
                }
                for &(nb, w) in &adjacency[node as usize] {
                    let nd = d + w;
                    if nd < dist[nb as usize] {
                        dist[nb as usize] = nd;
                        heap.push(HeapEntry(nd, nb));
                    }
                }
            }
            dist
        })
        .collect();

    let mut out = Array2::<f64>::zeros((n, n));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, d) in row.into_iter().enumerate() {
            if !d.is_finite() {
                return Err(N2dError::Numerical(
                    "geodesic distances infinite after bridging".into(),
                ));
            }
            out[[i, j]] = d;
        }
    }
    Ok(out)
}

/// Classical MDS: eigendecomposition of `B = -1/2 J D^2 J`. Coordinates are
/// eigenvectors scaled by sqrt(max(eigenvalue, 0)); dimensions beyond the
/// positive spectrum are zero and counted as padded.
fn classical_mds(dist: &Array2<f64>, m: usize, seed: u64) -> Result<(Array2<f64>, usize)> {
    let n = dist.nrows();
    if m >= n {
        return Err(N2dError::Precondition(format!(
            "mds needs n_components < n, got m={m} n={n}"
        )));
    }

    // Double centering of the squared distances.
    let mut b = Array2::<f64>::zeros((n, n));
    let mut row_mean = vec![0.0f64; n];
    let mut total = 0.0f64;
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..n {
            let d2 = dist[[i, j]] * dist[[i, j]];
            s += d2;
        }
        row_mean[i] = s / n as f64;
        total += s;
    }
    let total_mean = total / (n * n) as f64;
    for i in 0..n {
        for j in 0..n {
            let d2 = dist[[i, j]] * dist[[i, j]];
            b[[i, j]] = -0.5 * (d2 - row_mean[i] - row_mean[j] + total_mean);
        }
    }

    let (vals, vecs) = if n <= 2048 {
        let (vals, vecs) = jacobi_eigh(&b.view());
        (
            vals.slice(ndarray::s![..m]).to_owned(),
            vecs.slice(ndarray::s![.., ..m]).to_owned(),
        )
    } else {
        // Shift so the operator is PSD, then take the leading pairs.
        let shift = b
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0f64, f64::max);
        let apply = |x: &ArrayView2<f64>| -> Array2<f64> {
            let mut y = b.dot(x);
            y += &(x * shift);
            y
        };
        let (mut vals, vecs) = subspace_iteration(apply, n, m, 600, 1e-8, seed)?;
        vals.mapv_inplace(|v| v - shift);
        (vals, vecs)
    };

    let mut coords = Array2::<f64>::zeros((n, m));
    let mut padded = 0;
    for j in 0..m {
        let lambda = vals[j];
        if lambda > 0.0 {
            let scale = lambda.sqrt();
            for i in 0..n {
                coords[[i, j]] = vecs[[i, j]] * scale;
            }
        } else {
            padded += 1;
        }
    }
    Ok((coords, padded))
}
