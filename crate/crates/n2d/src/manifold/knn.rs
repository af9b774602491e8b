//! k-nearest-neighbor graph construction: brute-force exact mode and an
//! NN-descent approximate mode with a built-in recall audit.

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{N2dError, Result};
use crate::manifold::Embedding;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnnMode {
    Exact,
    Approximate { seed: u64 },
}

/// For each node, its k nearest neighbors (self excluded), distances sorted
/// ascending with ties broken by lower index.
#[derive(Debug, Clone)]
pub struct NeighborGraph {
    pub indices: Vec<Vec<u32>>,
    pub distances: Vec<Vec<f64>>,
    pub k: usize,
}

impl NeighborGraph {
    pub fn n_nodes(&self) -> usize {
        self.indices.len()
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Exact k nearest neighbors of `row` against all rows of `data`.
fn exact_row(data: &ArrayView2<f64>, row: usize, k: usize) -> (Vec<u32>, Vec<f64>) {
    let n = data.nrows();
    let anchor = data.row(row);
    let anchor = anchor.as_slice().unwrap();
    let mut all: Vec<(f64, u32)> = Vec::with_capacity(n - 1);
    for j in 0..n {
        if j != row {
            let d = euclidean(anchor, data.row(j).as_slice().unwrap());
            all.push((d, j as u32));
        }
    }
    let cmp = |a: &(f64, u32), b: &(f64, u32)| {
        a.0.partial_cmp(&b.0).unwrap().then_with(|| a.1.cmp(&b.1))
    };
    if all.len() > k {
        all.select_nth_unstable_by(k - 1, cmp);
        all.truncate(k);
    }
    all.sort_by(cmp);
    (
        all.iter().map(|&(_, j)| j).collect(),
        all.iter().map(|&(d, _)| d).collect(),
    )
}

/// Builds the kNN graph. Exact mode is a brute-force scan; approximate mode
/// runs NN-descent and audits its recall against the exact answer on a
/// seeded sample of 100 nodes, falling back to the exact scan if the audit
/// lands below 95%.
pub fn knn_graph(emb: &Embedding, k: usize, mode: KnnMode) -> Result<NeighborGraph> {
    let n = emb.n_samples();
    if k == 0 || k >= n {
        return Err(N2dError::Precondition(format!(
            "knn requires 0 < k < n (k={k}, n={n})"
        )));
    }
    let data = emb.coords.view();
    match mode {
        KnnMode::Exact => {
            let rows: Vec<(Vec<u32>, Vec<f64>)> = (0..n)
                .into_par_iter()
                .map(|i| exact_row(&data, i, k))
                .collect();
            let (indices, distances) = rows.into_iter().unzip();
            Ok(NeighborGraph {
                indices,
                distances,
                k,
            })
        }
        KnnMode::Approximate { seed } => {
            let graph = nn_descent(&data, k, seed);
            let recall = audit_recall(&data, &graph, 100, seed ^ 0x9e3779b97f4a7c15);
            if recall >= 0.95 {
                Ok(graph)
            } else {
                knn_graph(emb, k, KnnMode::Exact)
            }
        }
    }
}

/// Fraction of true k-nearest neighbors recovered, measured on a seeded
/// sample of nodes.
pub fn audit_recall(
    data: &ArrayView2<f64>,
    graph: &NeighborGraph,
    sample_size: usize,
    seed: u64,
) -> f64 {
    let n = data.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.shuffle(&mut rng);
    nodes.truncate(sample_size.min(n));

    let mut hits = 0usize;
    let mut total = 0usize;
    for &i in &nodes {
        let (truth, _) = exact_row(data, i, graph.k);
        for t in &truth {
            if graph.indices[i].contains(t) {
                hits += 1;
            }
        }
        total += truth.len();
    }
    if total == 0 {
        1.0
    } else {
        hits as f64 / total as f64
    }
}

/// Bounded candidate list for one node during NN-descent, kept sorted by
/// (distance, index).
struct Candidates {
    items: Vec<(f64, u32, bool)>, // (distance, index, is_new)
    cap: usize,
}

impl Candidates {
    fn new(cap: usize) -> Self {
        Candidates {
            items: Vec::with_capacity(cap + 1),
            cap,
        }
    }

    fn threshold(&self) -> f64 {
        if self.items.len() < self.cap {
            f64::INFINITY
        } else {
            self.items.last().unwrap().0
        }
    }

    fn push(&mut self, d: f64, idx: u32) -> bool {
        if self.items.iter().any(|&(_, j, _)| j == idx) {
            return false;
        }
        if d >= self.threshold() && self.items.len() >= self.cap {
            return false;
        }
        let pos = self
            .items
            .partition_point(|&(dd, jj, _)| (dd, jj) < (d, idx));
        self.items.insert(pos, (d, idx, true));
        self.items.truncate(self.cap);
        true
    }
}

fn nn_descent(data: &ArrayView2<f64>, k: usize, seed: u64) -> NeighborGraph {
    let n = data.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_candidates = 50.min(2 * k);
    let max_iters = 12;

    let mut heaps: Vec<Candidates> = (0..n).map(|_| Candidates::new(k)).collect();
    for i in 0..n {
        while heaps[i].items.len() < k.min(n - 1) {
            let j = rng.gen_range(0..n);
            if j != i {
                let d = euclidean(
                    data.row(i).as_slice().unwrap(),
                    data.row(j).as_slice().unwrap(),
                );
                heaps[i].push(d, j as u32);
            }
        }
    }

    for _ in 0..max_iters {
        // Split each node's candidates into new/old and sample reverse edges.
        let mut new_fwd: Vec<Vec<u32>> = vec![Vec::new(); n];
        let mut old_fwd: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (i, heap) in heaps.iter_mut().enumerate() {
            for item in heap.items.iter_mut() {
                if item.2 {
                    new_fwd[i].push(item.1);
                    item.2 = false;
                } else {
                    old_fwd[i].push(item.1);
                }
            }
        }
        let mut new_all = new_fwd.clone();
        let mut old_all = old_fwd.clone();
        for i in 0..n {
            for &j in &new_fwd[i] {
                new_all[j as usize].push(i as u32);
            }
            for &j in &old_fwd[i] {
                old_all[j as usize].push(i as u32);
            }
        }
        for list in new_all.iter_mut().chain(old_all.iter_mut()) {
            list.sort_unstable();
            list.dedup();
            if list.len() > max_candidates {
                list.shuffle(&mut rng);
                list.truncate(max_candidates);
                list.sort_unstable();
            }
        }

        // Local join: new x new and new x old.
        let mut updates = 0usize;
        for i in 0..n {
            for (a_pos, &a) in new_all[i].iter().enumerate() {
                for &b in new_all[i][a_pos + 1..].iter().chain(old_all[i].iter()) {
                    if a == b {
                        continue;
                    }
                    let d = euclidean(
                        data.row(a as usize).as_slice().unwrap(),
                        data.row(b as usize).as_slice().unwrap(),
                    );
                    if d < heaps[a as usize].threshold() && heaps[a as usize].push(d, b) {
                        updates += 1;
                    }
                    if d < heaps[b as usize].threshold() && heaps[b as usize].push(d, a) {
                        updates += 1;
                    }
                }
            }
        }
        if updates <= (0.001 * (n * k) as f64) as usize {
            break;
        }
    }

    let mut indices = Vec::with_capacity(n);
    let mut distances = Vec::with_capacity(n);
    for heap in heaps {
        indices.push(heap.items.iter().map(|&(_, j, _)| j).collect());
        distances.push(heap.items.iter().map(|&(d, _, _)| d).collect());
    }
    NeighborGraph {
        indices,
        distances,
        k,
    }
}
