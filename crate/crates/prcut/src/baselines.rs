//! Classical baselines: k-means and dense spectral clustering on the
//! unnormalized Laplacian.

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::eigen::{symmetric_eigen, EigenError};
use crate::graph::{GraphError, Partition, SparseSimilarity};

/// Dense eigendecomposition is kept honest by capping the problem size.
pub const DENSE_EIGEN_CAP: usize = 5000;

#[derive(Debug, Error)]
pub enum BaselinesError {
    #[error("need n >= k + 1 nontrivial eigenvectors, got n = {n}, k = {k}")]
    TooFewVertices { n: usize, k: usize },
    #[error("dense eigensolver capped at n = {cap}, got n = {n}")]
    TooLargeForDense { n: usize, cap: usize },
    #[error("k-means needs n >= k, got n = {n}, k = {k}")]
    TooFewPoints { n: usize, k: usize },
    #[error("k-means needs at least one restart")]
    ZeroRestarts,
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// The k smoothest nontrivial eigenpairs of the unnormalized Laplacian.
#[derive(Debug, Clone)]
pub struct EigenResult {
    /// Ascending; the trivial zero of the constant vector is excluded.
    pub eigenvalues: Array1<f64>,
    /// n x k, column-orthonormal.
    pub eigenvectors: Array2<f64>,
}

/// Eigenpairs 2..k+1 of `L = D - W` (the constant eigenvector is skipped).
///
/// The constant direction is deflated by adding `shift * (1 1^T) / n` with
/// `shift` above the Laplacian spectrum; eigenvectors orthogonal to the
/// constant keep their eigenpairs exactly, so the k smallest of the shifted
/// matrix are precisely the k smoothest nontrivial pairs of L. Dropping the
/// first returned column instead would pick an arbitrary basis vector of the
/// null space whenever the graph is disconnected.
pub fn smallest_eigvecs(
    similarity: &SparseSimilarity,
    k: usize,
) -> Result<EigenResult, BaselinesError> {
    let n = similarity.n();
    if n < k + 1 {
        return Err(BaselinesError::TooFewVertices { n, k });
    }
    if n > DENSE_EIGEN_CAP {
        return Err(BaselinesError::TooLargeForDense {
            n,
            cap: DENSE_EIGEN_CAP,
        });
    }
    let mut shifted = similarity.laplacian();
    let max_degree = similarity
        .degree()
        .iter()
        .fold(0.0f64, |acc, &d| acc.max(d));
    // lambda_max(L) <= 2 * d_max, so this pushes only the constant past
    // every nontrivial eigenvalue.
    let shift = 2.0 * max_degree + 1.0;
    let bump = shift / n as f64;
    shifted.mapv_inplace(|v| v + bump);
    let eig = symmetric_eigen(&shifted)?;
    let eigenvalues = Array1::from_iter((0..k).map(|i| eig.values[i]));
    let mut eigenvectors = Array2::zeros((n, k));
    for col in 0..k {
        for row in 0..n {
            eigenvectors[[row, col]] = eig.vectors[[row, col]];
        }
    }
    Ok(EigenResult {
        eigenvalues,
        eigenvectors,
    })
}

/// Lloyd's algorithm with k-means++ seeding; the best of `n_init` restarts
/// by inertia wins. Restart seeds derive deterministically from `seed`.
pub fn kmeans(
    points: ArrayView2<'_, f64>,
    k: usize,
    n_init: usize,
    seed: u64,
) -> Result<Partition, BaselinesError> {
    let (labels, _) = kmeans_with_inertia(points, k, n_init, seed)?;
    Ok(labels)
}

/// As [`kmeans`] but also reporting the winning inertia.
pub fn kmeans_with_inertia(
    points: ArrayView2<'_, f64>,
    k: usize,
    n_init: usize,
    seed: u64,
) -> Result<(Partition, f64), BaselinesError> {
    let n = points.nrows();
    if n < k || k == 0 {
        return Err(BaselinesError::TooFewPoints { n, k });
    }
    if n_init == 0 {
        return Err(BaselinesError::ZeroRestarts);
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    for restart in 0..n_init {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart as u64);
        let (labels, inertia) = lloyd_once(points, k, &mut rng);
        if best.as_ref().is_none_or(|(_, b)| inertia < *b) {
            best = Some((labels, inertia));
        }
    }
    let (labels, inertia) = best.unwrap();
    Ok((Partition::new(labels, k)?, inertia))
}

fn squared_distance(a: ndarray::ArrayView1<'_, f64>, b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum()
}

fn lloyd_once(points: ArrayView2<'_, f64>, k: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, f64) {
    let n = points.nrows();
    let d = points.ncols();

    // k-means++ seeding.
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points.row(rng.random_range(0..n)).to_vec());
    let mut min_dist: Vec<f64> = (0..n)
        .map(|i| squared_distance(points.row(i), &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = min_dist.iter().sum();
        let next = if total <= 0.0 {
            rng.random_range(0..n)
        } else {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in min_dist.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        };
        centroids.push(points.row(next).to_vec());
        for i in 0..n {
            let dist = squared_distance(points.row(i), centroids.last().unwrap());
            if dist < min_dist[i] {
                min_dist[i] = dist;
            }
        }
    }

    let mut labels = vec![0usize; n];
    let mut inertia = f64::INFINITY;
    for _ in 0..300 {
        // Assignment step; ties go to the smaller centroid index.
        let mut new_inertia = 0.0;
        for i in 0..n {
            let mut best = 0;
            let mut best_dist = squared_distance(points.row(i), &centroids[0]);
            for (c, centroid) in centroids.iter().enumerate().skip(1) {
                let dist = squared_distance(points.row(i), centroid);
                if dist < best_dist {
                    best_dist = dist;
                    best = c;
                }
            }
            labels[i] = best;
            new_inertia += best_dist;
        }

        // Update step.
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            for (s, &x) in sums[labels[i]].iter_mut().zip(points.row(i)) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Reseed the empty cluster at the farthest point and claim it.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        squared_distance(points.row(a), &centroids[labels[a]])
                            .partial_cmp(&squared_distance(
                                points.row(b),
                                &centroids[labels[b]],
                            ))
                            .unwrap()
                    })
                    .unwrap();
                centroids[c] = points.row(far).to_vec();
                labels[far] = c;
            } else {
                for (s, sum) in centroids[c].iter_mut().zip(&sums[c]) {
                    *s = sum / counts[c] as f64;
                }
            }
        }

        let converged = new_inertia.is_finite()
            && inertia.is_finite()
            && (inertia - new_inertia).abs() <= 1e-8 * inertia.max(f64::MIN_POSITIVE);
        inertia = new_inertia;
        if converged {
            break;
        }
    }

    // Final assignment consistent with the last centroid update.
    let mut final_inertia = 0.0;
    for i in 0..n {
        let mut best = 0;
        let mut best_dist = squared_distance(points.row(i), &centroids[0]);
        for (c, centroid) in centroids.iter().enumerate().skip(1) {
            let dist = squared_distance(points.row(i), centroid);
            if dist < best_dist {
                best_dist = dist;
                best = c;
            }
        }
        labels[i] = best;
        final_inertia += best_dist;
    }
    // Guarantee no cluster ends empty even on degenerate inputs.
    let mut counts = vec![0usize; k];
    for &l in &labels {
        counts[l] += 1;
    }
    for c in 0..k {
        if counts[c] == 0 {
            let donor = (0..n).find(|&i| counts[labels[i]] > 1).unwrap();
            counts[labels[donor]] -= 1;
            labels[donor] = c;
            counts[c] = 1;
        }
    }
    (labels, final_inertia)
}

/// Vanilla spectral clustering: k-means on the k smoothest nontrivial
/// Laplacian eigenvectors, best restart by inertia. `k = n` degenerates to
/// one point per cluster.
pub fn spectral_clustering(
    similarity: &SparseSimilarity,
    k: usize,
    n_init: usize,
    seed: u64,
) -> Result<Partition, BaselinesError> {
    let n = similarity.n();
    if k == n {
        return Ok(Partition::new((0..n).collect(), n)?);
    }
    let eig = smallest_eigvecs(similarity, k)?;
    let (partition, _) = kmeans_with_inertia(eig.eigenvectors.view(), k, n_init, seed)?;
    Ok(partition)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{knn_graph, ratio_cut, KnnMetric};
    use crate::metrics::unsupervised_accuracy;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_cliques(size: usize) -> SparseSimilarity {
        let mut entries = Vec::new();
        for block in 0..2 {
            let base = block * size;
            for i in 0..size {
                for j in (i + 1)..size {
                    entries.push((base + i, base + j, 1.0));
                }
            }
        }
        SparseSimilarity::from_entries(2 * size, entries).unwrap()
    }

    #[test]
    fn laplacian_smallest_eigenvalue_is_zero() {
        let g = two_cliques(4);
        let eig = symmetric_eigen(&g.laplacian()).unwrap();
        assert_abs_diff_eq!(eig.values[0], 0.0, epsilon = 1e-9);
        assert!(eig.values.iter().all(|&v| v >= -1e-10));
        // Two components: zero eigenvalue with multiplicity two.
        assert_abs_diff_eq!(eig.values[1], 0.0, epsilon = 1e-9);
        assert!(eig.values[2] > 0.1);
    }

    #[test]
    fn component_count_matches_zero_multiplicity() {
        // Three components of different sizes.
        let entries = vec![(0, 1, 1.0), (2, 3, 1.0), (3, 4, 1.0), (5, 6, 1.0)];
        let g = SparseSimilarity::from_entries(7, entries).unwrap();
        let eig = symmetric_eigen(&g.laplacian()).unwrap();
        let zeros = eig.values.iter().filter(|&&v| v.abs() < 1e-9).count();
        assert_eq!(zeros, 3);
    }

    #[test]
    fn path3_spectrum() {
        let g = SparseSimilarity::from_entries(3, vec![(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let eig = smallest_eigvecs(&g, 2).unwrap();
        assert_abs_diff_eq!(eig.eigenvalues[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(eig.eigenvalues[1], 3.0, epsilon = 1e-9);
    }

    #[test]
    fn eigvecs_residual_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut entries = Vec::new();
        let n = 30;
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random::<f64>() < 0.2 {
                    entries.push((i, j, rng.random::<f64>()));
                }
            }
        }
        let g = SparseSimilarity::from_entries(n, entries).unwrap();
        let k = 5;
        let eig = smallest_eigvecs(&g, k).unwrap();
        let l = g.laplacian();
        let norm = l.iter().map(|v| v * v).sum::<f64>().sqrt();
        for c in 0..k {
            let v = eig.eigenvectors.column(c);
            let lv = l.dot(&v);
            for i in 0..n {
                assert!((lv[i] - eig.eigenvalues[c] * v[i]).abs() <= 1e-8 * norm);
            }
            for c2 in 0..k {
                let dot = v.dot(&eig.eigenvectors.column(c2));
                let expected = if c == c2 { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(dot, expected, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn smallest_eigvecs_validates() {
        let g = SparseSimilarity::from_entries(3, vec![(0, 1, 1.0)]).unwrap();
        assert!(matches!(
            smallest_eigvecs(&g, 3),
            Err(BaselinesError::TooFewVertices { .. })
        ));
    }

    #[test]
    fn kmeans_recovers_separated_groups() {
        // Two coincident-point groups far apart.
        let mut data = Vec::new();
        for _ in 0..5 {
            data.extend([0.0, 0.0]);
        }
        for _ in 0..5 {
            data.extend([100.0, 1.0]);
        }
        let points = Array2::from_shape_vec((10, 2), data).unwrap();
        let part = kmeans(points.view(), 2, 3, 7).unwrap();
        let truth: Vec<usize> = (0..10).map(|i| i / 5).collect();
        let acc = unsupervised_accuracy(&truth, part.labels(), 2).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn kmeans_single_cluster_inertia_is_total_variance() {
        let points = Array2::from_shape_vec((4, 1), vec![0.0, 2.0, 4.0, 6.0]).unwrap();
        let (_, inertia) = kmeans_with_inertia(points.view(), 1, 1, 0).unwrap();
        // Mean 3, squared deviations 9 + 1 + 1 + 9.
        assert_abs_diff_eq!(inertia, 20.0, epsilon = 1e-9);
    }

    #[test]
    fn kmeans_deterministic_under_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let points = Array2::from_shape_fn((50, 2), |_| rng.random::<f64>());
        let a = kmeans(points.view(), 4, 5, 3).unwrap();
        let b = kmeans(points.view(), 4, 5, 3).unwrap();
        assert_eq!(a.labels(), b.labels());
    }

    #[test]
    fn spectral_separates_cliques() {
        let g = two_cliques(6);
        let part = spectral_clustering(&g, 2, 10, 1).unwrap();
        let truth: Vec<usize> = (0..12).map(|i| i / 6).collect();
        let acc = unsupervised_accuracy(&truth, part.labels(), 2).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn spectral_on_blobs() {
        // Three Gaussian blobs, knn graph, near-perfect recovery.
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 300;
        let centers = [(0.0, 0.0), (12.0, 0.0), (0.0, 12.0)];
        let mut data = Vec::with_capacity(n * 2);
        let mut truth = Vec::with_capacity(n);
        for i in 0..n {
            let c = i % 3;
            truth.push(c);
            data.push(centers[c].0 + rng.random::<f64>());
            data.push(centers[c].1 + rng.random::<f64>());
        }
        let points = Array2::from_shape_vec((n, 2), data).unwrap();
        let g = knn_graph(points.view(), 10, KnnMetric::Euclidean).unwrap();
        let part = spectral_clustering(&g, 3, 5, 2).unwrap();
        let acc = unsupervised_accuracy(&truth, part.labels(), 3).unwrap();
        assert!(acc >= 0.99, "accuracy {acc}");
    }

    #[test]
    fn spectral_degenerate_k_equals_n() {
        let g = SparseSimilarity::from_entries(
            4,
            vec![(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)],
        )
        .unwrap();
        let part = spectral_clustering(&g, 4, 1, 0).unwrap();
        assert_eq!(part.labels(), &[0, 1, 2, 3]);
        // Each vertex its own cluster: ratio-cut sums every boundary edge.
        let rc = ratio_cut(&g, &part).unwrap();
        assert_abs_diff_eq!(rc, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn spectral_invariant_under_vertex_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let n = 14;
        let mut entries = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random::<f64>() < 0.4 {
                    entries.push((i, j, rng.random::<f64>() + 0.5));
                }
            }
        }
        let g = SparseSimilarity::from_entries(n, entries.clone()).unwrap();
        let base = spectral_clustering(&g, 3, 20, 9).unwrap();

        let perm: Vec<usize> = {
            let mut p: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                let j = rng.random_range(0..=i);
                p.swap(i, j);
            }
            p
        };
        let permuted_entries: Vec<_> = entries
            .iter()
            .map(|&(i, j, w)| (perm[i], perm[j], w))
            .collect();
        let gp = SparseSimilarity::from_entries(n, permuted_entries).unwrap();
        let permuted = spectral_clustering(&gp, 3, 20, 9).unwrap();

        // Compare up to relabeling: pulled-back labels must match 1:1.
        let pulled: Vec<usize> = (0..n).map(|i| permuted.labels()[perm[i]]).collect();
        let acc = unsupervised_accuracy(base.labels(), &pulled, 3).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn spectral_rcut_reproducible() {
        let g = two_cliques(5);
        let p1 = spectral_clustering(&g, 2, 5, 123).unwrap();
        let p2 = spectral_clustering(&g, 2, 5, 123).unwrap();
        let r1 = ratio_cut(&g, &p1).unwrap();
        let r2 = ratio_cut(&g, &p2).unwrap();
        assert_eq!(r1.to_bits(), r2.to_bits());
    }
}
