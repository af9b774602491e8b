//! Clustering evaluation: accuracy under optimal cluster-to-label
//! assignment, normalized mutual information, and per-stage wall-clock
//! timing.

use std::collections::BTreeMap;
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{N2dError, Result};

/// Co-occurrence counts between two labelings; rows index the first
/// labeling, columns the second.
#[derive(Debug, Clone)]
pub struct ContingencyTable {
    pub counts: Array2<u64>,
    pub n: u64,
}

impl ContingencyTable {
    pub fn from_labels(y: &[usize], c: &[usize]) -> Result<Self> {
        if y.len() != c.len() {
            return Err(N2dError::Dimension {
                what: "label vectors".into(),
                expected: y.len(),
                actual: c.len(),
            });
        }
        if y.is_empty() {
            return Err(N2dError::Precondition("empty label vectors".into()));
        }
        let rows = y.iter().max().unwrap() + 1;
        let cols = c.iter().max().unwrap() + 1;
        let mut counts = Array2::<u64>::zeros((rows, cols));
        for (&yi, &ci) in y.iter().zip(c.iter()) {
            counts[[yi, ci]] += 1;
        }
        Ok(ContingencyTable {
            counts,
            n: y.len() as u64,
        })
    }
}

/// Minimum-cost assignment on a square cost matrix (Jonker-Volgenant style
/// shortest augmenting paths, O(k^3)). Rectangular inputs are zero-padded
/// to square. Returns, for each row, the assigned column.
pub fn hungarian(cost: &Array2<f64>) -> Result<Vec<usize>> {
    if cost.iter().any(|v| !v.is_finite()) {
        return Err(N2dError::Precondition(
            "assignment cost matrix has non-finite entries".into(),
        ));
    }
    let (r, c) = cost.dim();
    let k = r.max(c);
    // 1-indexed potentials; column 0 is a virtual source.
    let mut u = vec![0.0f64; k + 1];
    let mut v = vec![0.0f64; k + 1];
    let mut assignment = vec![0usize; k + 1]; // column -> row (1-indexed)

    let at = |i: usize, j: usize| -> f64 {
        if i < r && j < c {
            cost[[i, j]]
        } else {
            0.0
        }
    };

    for i in 1..=k {
        let mut links = vec![0usize; k + 1];
        let mut mins = vec![f64::INFINITY; k + 1];
        let mut visited = vec![false; k + 1];
        let mut marked_j = 0usize;
        assignment[0] = i;

        loop {
            visited[marked_j] = true;
            let row = assignment[marked_j];
            let mut delta = f64::INFINITY;
            let mut next_j = 0usize;
            for j in 1..=k {
                if !visited[j] {
                    let reduced = at(row - 1, j - 1) - u[row] - v[j];
                    if reduced < mins[j] {
                        mins[j] = reduced;
                        links[j] = marked_j;
                    }
                    if mins[j] < delta {
                        delta = mins[j];
                        next_j = j;
                    }
                }
            }
            for j in 0..=k {
                if visited[j] {
                    u[assignment[j]] += delta;
                    v[j] -= delta;
                } else {
                    mins[j] -= delta;
                }
            }
            marked_j = next_j;
            if assignment[marked_j] == 0 {
                break;
            }
        }
        // Augment along the alternating path.
        while marked_j != 0 {
            let prev_j = links[marked_j];
            assignment[marked_j] = assignment[prev_j];
            marked_j = prev_j;
        }
    }

    let mut row_to_col = vec![0usize; k];
    for j in 1..=k {
        if assignment[j] > 0 {
            row_to_col[assignment[j] - 1] = j - 1;
        }
    }
    row_to_col.truncate(r);
    Ok(row_to_col)
}

/// Clustering accuracy: the fraction of points matched under the best
/// bijective mapping from predicted clusters to true labels. Also returns
/// that mapping (predicted cluster -> true label).
pub fn accuracy(y: &[usize], c: &[usize]) -> Result<(f64, BTreeMap<usize, usize>)> {
    let table = ContingencyTable::from_labels(y, c)?;
    let (rows, cols) = table.counts.dim();
    // Minimize negated counts over (cluster, label) pairs.
    let cost = Array2::from_shape_fn((cols, rows), |(j, i)| -(table.counts[[i, j]] as f64));
    let col_to_row = hungarian(&cost)?;
    let mut matched = 0u64;
    let mut mapping = BTreeMap::new();
    for (cluster, &label) in col_to_row.iter().enumerate() {
        if cluster < cols && label < rows {
            matched += table.counts[[label, cluster]];
            mapping.insert(cluster, label);
        }
    }
    Ok((matched as f64 / table.n as f64, mapping))
}

/// Normalized mutual information: `2 I(y, c) / (H(y) + H(c))` with natural
/// logarithms. Both partitions trivial gives 1; exactly one trivial gives 0.
pub fn nmi(y: &[usize], c: &[usize]) -> Result<f64> {
    let table = ContingencyTable::from_labels(y, c)?;
    let n = table.n as f64;
    let row_sums: Vec<f64> = table
        .counts
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|&v| v as f64).sum())
        .collect();
    let col_sums: Vec<f64> = table
        .counts
        .columns()
        .into_iter()
        .map(|col| col.iter().map(|&v| v as f64).sum())
        .collect();

    let entropy = |sums: &[f64]| -> f64 {
        -sums
            .iter()
            .filter(|&&s| s > 0.0)
            .map(|&s| (s / n) * (s / n).ln())
            .sum::<f64>()
    };
    let h_y = entropy(&row_sums);
    let h_c = entropy(&col_sums);
    if h_y == 0.0 && h_c == 0.0 {
        return Ok(1.0);
    }
    if h_y == 0.0 || h_c == 0.0 {
        return Ok(0.0);
    }

    let mut mi = 0.0;
    for i in 0..row_sums.len() {
        for j in 0..col_sums.len() {
            let nij = table.counts[[i, j]] as f64;
            if nij > 0.0 {
                mi += (nij / n) * ((n * nij) / (row_sums[i] * col_sums[j])).ln();
            }
        }
    }
    Ok(2.0 * mi / (h_y + h_c))
}

/// Wall-clock durations of the pipeline stages, in seconds.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct StageTimings {
    pub ae_s: f64,
    pub manifold_s: f64,
    pub cluster_s: f64,
    pub total_s: f64,
}

impl StageTimings {
    pub fn minutes(&self) -> (f64, f64, f64, f64) {
        (
            self.ae_s / 60.0,
            self.manifold_s / 60.0,
            self.cluster_s / 60.0,
            self.total_s / 60.0,
        )
    }
}

/// Accumulates named stage durations against a monotonic clock.
#[derive(Debug)]
pub struct StageTimer {
    started: Instant,
    stages: Vec<(String, f64)>,
}

impl StageTimer {
    pub fn new() -> Self {
        StageTimer {
            started: Instant::now(),
            stages: Vec::new(),
        }
    }

    /// Times `f` and records the duration under `stage`.
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        self.stages.push((stage.to_string(), t0.elapsed().as_secs_f64()));
        out
    }

    pub fn record(&mut self, stage: &str, seconds: f64) {
        self.stages.push((stage.to_string(), seconds));
    }

    pub fn get(&self, stage: &str) -> f64 {
        self.stages
            .iter()
            .filter(|(s, _)| s == stage)
            .map(|(_, d)| d)
            .sum()
    }

    /// Total wall-clock time since construction.
    pub fn elapsed_total(&self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }

    pub fn timings(&self) -> StageTimings {
        StageTimings {
            ae_s: self.get("ae"),
            manifold_s: self.get("manifold"),
            cluster_s: self.get("cluster"),
            total_s: self.elapsed_total(),
        }
    }
}

impl Default for StageTimer {
    fn default() -> Self {
        Self::new()
    }
}

/// Metric outcomes of one pipeline run. Serialized field names are part of
/// the report format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: f64,
    pub nmi: f64,
    /// Cluster id -> ground-truth label used by the accuracy matching.
    pub mapping: BTreeMap<usize, usize>,
    pub timings: StageTimings,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn hungarian_prefers_zero_diagonal() {
        let cost = array![[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]];
        assert_eq!(hungarian(&cost).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn hungarian_equal_costs_sum_is_kv() {
        let k = 4;
        let v = 2.5;
        let cost = Array2::from_elem((k, k), v);
        let assign = hungarian(&cost).unwrap();
        let total: f64 = assign.iter().enumerate().map(|(i, &j)| cost[[i, j]]).sum();
        assert!((total - k as f64 * v).abs() < 1e-12);
        // must still be a permutation
        let mut seen = vec![false; k];
        for &j in &assign {
            assert!(!seen[j]);
            seen[j] = true;
        }
    }

    #[test]
    fn hungarian_rejects_non_finite() {
        let cost = array![[0.0, f64::NAN], [1.0, 0.0]];
        assert!(hungarian(&cost).is_err());
    }

    #[test]
    fn accuracy_perfect_and_permuted() {
        let y = vec![0, 0, 1, 1, 2];
        let (acc, _) = accuracy(&y, &y).unwrap();
        assert_eq!(acc, 1.0);
        // permute label ids: 0->2, 1->0, 2->1
        let c: Vec<usize> = y.iter().map(|&v| (v + 2) % 3).collect();
        let (acc, _) = accuracy(&y, &c).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn accuracy_hand_case() {
        // Best mapping: cluster 1 -> label 0, cluster 0 -> label 1; 3 of 4 match.
        let (acc, _) = accuracy(&[0, 0, 1, 1], &[1, 1, 1, 0]).unwrap();
        assert!((acc - 0.75).abs() < 1e-15);
    }

    #[test]
    fn accuracy_rejects_length_mismatch() {
        assert!(accuracy(&[0, 1], &[0]).is_err());
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn nmi_identical_and_constant() {
        let y = vec![0, 0, 1, 1];
        assert!((nmi(&y, &y).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(nmi(&y, &[0, 0, 0, 0]).unwrap(), 0.0);
        assert_eq!(nmi(&[0, 0, 0, 0], &[0, 0, 0, 0]).unwrap(), 1.0);
    }

    #[test]
    fn nmi_hand_case_matches_direct_formula() {
        // Contingency for y=[0,0,1,1], c=[0,1,1,1]:
        //   y=0: {c=0:1, c=1:1}; y=1: {c=1:2}
        // H(y) = ln 2; H(c) = -(1/4 ln 1/4 + 3/4 ln 3/4)
        // I = 1/4 ln(4*1/(2*1)) + 1/4 ln(4*1/(2*3)) + 2/4 ln(4*2/(2*3))
        let y = [0usize, 0, 1, 1];
        let c = [0usize, 1, 1, 1];
        let h_y = (2.0f64).ln();
        let h_c = -(0.25 * 0.25f64.ln() + 0.75 * 0.75f64.ln());
        let i = 0.25 * (4.0f64 / 2.0).ln() + 0.25 * (4.0f64 / 6.0).ln() + 0.5 * (8.0f64 / 6.0).ln();
        let expected = 2.0 * i / (h_y + h_c);
        assert!((nmi(&y, &c).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn constant_predictions_hit_pigeonhole_floor() {
        // k balanced classes, constant prediction: ACC is exactly 1/k.
        for k in [2usize, 4, 5] {
            let y: Vec<usize> = (0..k * 12).map(|i| i % k).collect();
            let c = vec![0usize; k * 12];
            let (acc, _) = accuracy(&y, &c).unwrap();
            assert!(acc >= 1.0 / k as f64 - 1e-15, "k={k}: acc {acc}");
            assert!((acc - 1.0 / k as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn nested_timer_child_within_parent() {
        let mut outer = StageTimer::new();
        let inner_total = outer.time("ae", || {
            let mut inner = StageTimer::new();
            inner.time("cluster", || {
                std::thread::sleep(std::time::Duration::from_millis(3))
            });
            inner.timings().cluster_s
        });
        assert!(inner_total <= outer.get("ae"));
    }

    #[test]
    fn timer_records_stages() {
        let mut timer = StageTimer::new();
        timer.time("ae", || std::thread::sleep(std::time::Duration::from_millis(5)));
        timer.time("cluster", || ());
        let t = timer.timings();
        assert!(t.ae_s >= 0.005);
        assert!(t.total_s >= t.ae_s);
        assert!(t.total_s >= t.ae_s + t.manifold_s + t.cluster_s - 1e-3);
    }
}
