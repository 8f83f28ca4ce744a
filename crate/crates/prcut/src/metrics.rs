//! Label-vs-cluster agreement metrics: unsupervised accuracy through the
//! Kuhn-Munkres alignment, normalized mutual information, the adjusted Rand
//! index, and the graph ratio-cut of a predicted clustering.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ratio_cut, GraphError, Partition, SparseSimilarity};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("label vectors differ in length: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("label {label} at position {pos} exceeds k = {k}")]
    LabelOutOfRange { label: usize, pos: usize, k: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Agreement metrics for one labeling/clustering pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
    pub rcut: Option<f64>,
    pub n: usize,
    pub k: usize,
    pub degenerate_flags: Vec<String>,
}

impl MetricsReport {
    /// Compute all label metrics; the ratio-cut fills in when a graph is
    /// supplied.
    pub fn compute(
        truth: &[usize],
        predicted: &[usize],
        k: usize,
        graph: Option<&SparseSimilarity>,
    ) -> Result<Self, MetricsError> {
        let acc = unsupervised_accuracy(truth, predicted, k)?;
        let nmi_value = nmi(truth, predicted)?;
        let ari_value = ari(truth, predicted)?;
        let mut flags = Vec::new();
        let rcut = match graph {
            Some(g) => {
                let (value, mut rc_flags) = rcut_metric(g, predicted)?;
                flags.append(&mut rc_flags);
                Some(value)
            }
            None => None,
        };
        Ok(Self {
            acc,
            nmi: nmi_value,
            ari: ari_value,
            rcut,
            n: truth.len(),
            k,
            degenerate_flags: flags,
        })
    }
}

fn check_lengths(a: &[usize], b: &[usize]) -> Result<(), MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

/// Minimum-cost assignment on a square matrix (Jonker-Volgenant style
/// shortest augmenting paths with potentials). Returns `assign[row] = col`.
pub fn hungarian_min(cost: &Array2<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "cost matrix must be square");
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut matched = vec![0usize; n + 1]; // column -> 1-based row
    let mut path = vec![0usize; n + 1];
    for row in 1..=n {
        matched[0] = row;
        let mut j0 = 0usize;
        let mut min_slack = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let slack = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                if slack < min_slack[j] {
                    min_slack[j] = slack;
                    path[j] = j0;
                }
                if min_slack[j] < delta {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = path[j0];
            matched[j0] = matched[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=n {
        if matched[j] > 0 {
            assign[matched[j] - 1] = j - 1;
        }
    }
    assign
}

fn contingency_dense(
    truth: &[usize],
    predicted: &[usize],
    k: usize,
) -> Result<Array2<f64>, MetricsError> {
    let mut table = Array2::zeros((k, k));
    for (pos, (&y, &c)) in truth.iter().zip(predicted).enumerate() {
        if y >= k {
            return Err(MetricsError::LabelOutOfRange { label: y, pos, k });
        }
        if c >= k {
            return Err(MetricsError::LabelOutOfRange { label: c, pos, k });
        }
        table[[c, y]] += 1.0;
    }
    Ok(table)
}

/// Best classification accuracy over all relabelings of the clustering,
/// found by maximizing the contingency trace with the Hungarian algorithm.
pub fn unsupervised_accuracy(
    truth: &[usize],
    predicted: &[usize],
    k: usize,
) -> Result<f64, MetricsError> {
    check_lengths(truth, predicted)?;
    if truth.is_empty() {
        return Ok(1.0);
    }
    let table = contingency_dense(truth, predicted, k)?;
    let cost = table.mapv(|v| -v);
    let assign = hungarian_min(&cost);
    let matched: f64 = assign
        .iter()
        .enumerate()
        .map(|(cluster, &class)| table[[cluster, class]])
        .sum();
    Ok(matched / truth.len() as f64)
}

type LabelCounts = BTreeMap<usize, usize>;
type JointCounts = BTreeMap<(usize, usize), usize>;

/// Sorted per-label counts and the (pairwise) joint counts. BTreeMaps keep
/// the summation order, and therefore the metric values, deterministic.
fn count_tables(a: &[usize], b: &[usize]) -> (LabelCounts, LabelCounts, JointCounts) {
    let mut count_a = BTreeMap::new();
    let mut count_b = BTreeMap::new();
    let mut joint = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *count_a.entry(x).or_insert(0) += 1;
        *count_b.entry(y).or_insert(0) += 1;
        *joint.entry((x, y)).or_insert(0) += 1;
    }
    (count_a, count_b, joint)
}

fn entropy(counts: &LabelCounts, n: f64) -> f64 {
    counts
        .values()
        .map(|&c| {
            let q = c as f64 / n;
            -q * q.ln()
        })
        .sum()
}

/// Mutual information over the empirical joint, normalized by the larger of
/// the two entropies (natural logs). Both labelings constant: 1; exactly one
/// constant: 0.
pub fn nmi(truth: &[usize], predicted: &[usize]) -> Result<f64, MetricsError> {
    check_lengths(truth, predicted)?;
    let n = truth.len() as f64;
    if truth.is_empty() {
        return Ok(1.0);
    }
    let (count_y, count_c, joint) = count_tables(truth, predicted);
    let h_y = entropy(&count_y, n);
    let h_c = entropy(&count_c, n);
    if h_y == 0.0 && h_c == 0.0 {
        return Ok(1.0);
    }
    if h_y == 0.0 || h_c == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (&(y, c), &count) in &joint {
        let pxy = count as f64 / n;
        let px = count_y[&y] as f64 / n;
        let py = count_c[&c] as f64 / n;
        mi += pxy * (pxy / (px * py)).ln();
    }
    Ok(mi / h_y.max(h_c))
}

fn choose2(v: usize) -> f64 {
    let v = v as f64;
    v * (v - 1.0) / 2.0
}

/// Adjusted Rand Index from pair counting over the contingency table.
pub fn ari(truth: &[usize], predicted: &[usize]) -> Result<f64, MetricsError> {
    check_lengths(truth, predicted)?;
    let n = truth.len();
    if n < 2 {
        return Ok(1.0);
    }
    let (count_y, count_c, joint) = count_tables(truth, predicted);
    let index: f64 = joint.values().map(|&c| choose2(c)).sum();
    let sum_y: f64 = count_y.values().map(|&c| choose2(c)).sum();
    let sum_c: f64 = count_c.values().map(|&c| choose2(c)).sum();
    let total = choose2(n);
    let expected = sum_y * sum_c / total;
    let max_index = 0.5 * (sum_y + sum_c);
    let denom = max_index - expected;
    if denom == 0.0 {
        Ok(1.0)
    } else {
        Ok((index - expected) / denom)
    }
}

/// Ratio-cut of a predicted clustering on a similarity graph. Empty cluster
/// ids are dropped (with a flag) before evaluation; a single surviving
/// cluster reports 0 with a degenerate flag.
pub fn rcut_metric(
    similarity: &SparseSimilarity,
    predicted: &[usize],
) -> Result<(f64, Vec<String>), MetricsError> {
    if predicted.len() != similarity.n() {
        return Err(MetricsError::LengthMismatch {
            left: predicted.len(),
            right: similarity.n(),
        });
    }
    let mut flags = Vec::new();
    // Compress away empty cluster ids.
    let mut remap = BTreeMap::new();
    for &c in predicted {
        let next = remap.len();
        remap.entry(c).or_insert(next);
    }
    let used = remap.len();
    let max_id = predicted.iter().copied().max().unwrap_or(0);
    if used < max_id + 1 {
        flags.push("empty_clusters_dropped".to_string());
    }
    if used <= 1 {
        flags.push("single_cluster".to_string());
        return Ok((0.0, flags));
    }
    let labels: Vec<usize> = predicted.iter().map(|c| remap[c]).collect();
    let partition = Partition::new(labels, used)?;
    Ok((ratio_cut(similarity, &partition)?, flags))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn accuracy_examples() {
        assert_abs_diff_eq!(
            unsupervised_accuracy(&[0, 0, 1, 1], &[1, 1, 0, 0], 2).unwrap(),
            1.0
        );
        assert_abs_diff_eq!(
            unsupervised_accuracy(&[0, 0, 1, 1], &[0, 1, 0, 1], 2).unwrap(),
            0.5
        );
        assert_abs_diff_eq!(
            unsupervised_accuracy(&[0, 1, 0, 1], &[0, 0, 0, 0], 2).unwrap(),
            0.5
        );
    }

    #[test]
    fn accuracy_rejects_bad_input() {
        assert!(unsupervised_accuracy(&[0, 1], &[0], 2).is_err());
        assert!(unsupervised_accuracy(&[0, 2], &[0, 1], 2).is_err());
    }

    fn brute_force_accuracy(truth: &[usize], predicted: &[usize], k: usize) -> f64 {
        fn permutations(k: usize) -> Vec<Vec<usize>> {
            if k == 1 {
                return vec![vec![0]];
            }
            let mut all = Vec::new();
            for rest in permutations(k - 1) {
                for pos in 0..k {
                    let mut p = rest.clone();
                    p.insert(pos, k - 1);
                    all.push(p);
                }
            }
            all
        }
        let mut best = 0usize;
        for sigma in permutations(k) {
            let hits = truth
                .iter()
                .zip(predicted)
                .filter(|&(&y, &c)| y == sigma[c])
                .count();
            best = best.max(hits);
        }
        best as f64 / truth.len() as f64
    }

    #[test]
    fn hungarian_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        for _ in 0..200 {
            let k = rng.random_range(2..=6);
            let n = rng.random_range(4..=40);
            let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            let predicted: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            let fast = unsupervised_accuracy(&truth, &predicted, k).unwrap();
            let brute = brute_force_accuracy(&truth, &predicted, k);
            assert_abs_diff_eq!(fast, brute, epsilon = 1e-12);
        }
    }

    #[test]
    fn accuracy_invariant_under_relabelings() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let k = 4;
        let truth: Vec<usize> = (0..60).map(|_| rng.random_range(0..k)).collect();
        let predicted: Vec<usize> = (0..60).map(|_| rng.random_range(0..k)).collect();
        let base = unsupervised_accuracy(&truth, &predicted, k).unwrap();
        let sigma = [2usize, 0, 3, 1];
        let truth_r: Vec<usize> = truth.iter().map(|&y| sigma[y]).collect();
        let predicted_r: Vec<usize> = predicted.iter().map(|&c| sigma[c]).collect();
        assert_abs_diff_eq!(
            unsupervised_accuracy(&truth_r, &predicted, k).unwrap(),
            base,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            unsupervised_accuracy(&truth, &predicted_r, k).unwrap(),
            base,
            epsilon = 1e-12
        );
    }

    #[test]
    fn nmi_examples() {
        assert_abs_diff_eq!(nmi(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_abs_diff_eq!(nmi(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap(), 0.0);
        // Symmetry.
        let y = [0, 0, 1, 2, 2, 1];
        let c = [1, 1, 1, 0, 0, 2];
        assert_abs_diff_eq!(nmi(&y, &c).unwrap(), nmi(&c, &y).unwrap(), epsilon = 1e-14);
        // Degenerate conventions.
        assert_eq!(nmi(&[0, 0], &[0, 0]).unwrap(), 1.0);
        assert_eq!(nmi(&[0, 1], &[0, 0]).unwrap(), 0.0);
    }

    #[test]
    fn ari_examples() {
        assert_abs_diff_eq!(ari(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_abs_diff_eq!(ari(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap(), -0.5);
    }

    #[test]
    fn ari_near_zero_for_independent_labelings() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut total = 0.0;
        let runs = 1000;
        for _ in 0..runs {
            let truth: Vec<usize> = (0..50).map(|_| rng.random_range(0..3)).collect();
            let predicted: Vec<usize> = (0..50).map(|_| rng.random_range(0..3)).collect();
            total += ari(&truth, &predicted).unwrap();
        }
        assert!((total / runs as f64).abs() < 0.02);
    }

    #[test]
    fn rcut_metric_flags() {
        let g =
            SparseSimilarity::from_entries(4, vec![(0, 1, 1.0), (2, 3, 1.0), (1, 2, 0.5)])
                .unwrap();
        // Half the boundary weight split over the two size-2 clusters.
        let (value, flags) = rcut_metric(&g, &[0, 0, 1, 1]).unwrap();
        assert_abs_diff_eq!(value, 0.25, epsilon = 1e-12);
        assert!(flags.is_empty());
        // Gap in the cluster ids: 3 was never used.
        let (_, flags) = rcut_metric(&g, &[0, 0, 3, 3]).unwrap();
        assert_eq!(flags, vec!["empty_clusters_dropped".to_string()]);
        // Everything in one cluster.
        let (value, flags) = rcut_metric(&g, &[0, 0, 0, 0]).unwrap();
        assert_eq!(value, 0.0);
        assert!(flags.contains(&"single_cluster".to_string()));
    }

    #[test]
    fn splitting_a_cluster_never_reduces_total_boundary() {
        // Enumerate all 2-cluster partitions of small random graphs and
        // compare total boundary weight against every split refinement.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let n = rng.random_range(4..=8);
            let mut entries = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.random::<f64>() < 0.6 {
                        entries.push((i, j, rng.random::<f64>()));
                    }
                }
            }
            let g = SparseSimilarity::from_entries(n, entries).unwrap();
            let boundary = |labels: &[usize]| -> f64 {
                g.entries()
                    .iter()
                    .filter(|&&(i, j, _)| labels[i] != labels[j])
                    .map(|&(_, _, w)| 2.0 * w)
                    .sum()
            };
            let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
            let base = boundary(&labels);
            // Split cluster 0 by moving each of its members to a new id 2.
            for mv in 0..n {
                if labels[mv] != 0 {
                    continue;
                }
                let mut refined = labels.clone();
                refined[mv] = 2;
                assert!(boundary(&refined) >= base - 1e-12);
            }
        }
    }

    #[test]
    fn report_serializes_with_flags() {
        let g = SparseSimilarity::from_entries(4, vec![(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        let report =
            MetricsReport::compute(&[0, 0, 1, 1], &[0, 0, 1, 1], 2, Some(&g)).unwrap();
        assert_eq!(report.acc, 1.0);
        assert_eq!(report.rcut, Some(0.0));
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"acc\":1.0"));
        assert!(json.contains("\"degenerate_flags\":[]"));
    }
}
