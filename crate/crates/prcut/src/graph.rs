//! Similarity graphs, batch kernels, and the classical ratio-cut.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph needs at least 2 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("k_neighbors = {k} must be positive and smaller than n = {n}")]
    BadNeighborCount { k: usize, n: usize },
    #[error("negative weight {w} on edge ({i}, {j})")]
    NegativeWeight { i: usize, j: usize, w: f64 },
    #[error("self-loop on vertex {0}")]
    SelfLoop(usize),
    #[error("edge ({i}, {j}) out of range for n = {n}")]
    EdgeOutOfRange { i: usize, j: usize, n: usize },
    #[error("row {0} has zero norm; cosine similarity undefined")]
    ZeroNormRow(usize),
    #[error("kernel kind {0:?} cannot be evaluated as a dense block")]
    UnsupportedKernel(KernelKind),
    #[error("cluster {0} is empty")]
    EmptyCluster(usize),
    #[error("label {label} at position {pos} exceeds cluster count {k}")]
    LabelOutOfRange { label: usize, pos: usize, k: usize },
    #[error("malformed graph file: {0}")]
    MalformedFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which similarity the trainer evaluates between batch pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    /// 0/1 adjacency of a prebuilt k-nearest-neighbor graph.
    KnnAdjacency,
    /// exp(cos(z_i, z_j) / tau).
    ExpCosine,
    /// 1 when the two samples carry the same label.
    LabelEquality,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub kind: KernelKind,
    /// Neighbor count for the k-NN graph kernel.
    pub k_neighbors: usize,
    /// Temperature for the exponential-cosine kernel.
    pub temperature: f64,
}

impl KernelConfig {
    pub fn knn(k_neighbors: usize) -> Self {
        Self {
            kind: KernelKind::KnnAdjacency,
            k_neighbors,
            temperature: 1.0,
        }
    }

    pub fn exp_cosine(temperature: f64) -> Self {
        Self {
            kind: KernelKind::ExpCosine,
            k_neighbors: 0,
            temperature,
        }
    }

    pub fn label_equality() -> Self {
        Self {
            kind: KernelKind::LabelEquality,
            k_neighbors: 0,
            temperature: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.kind == KernelKind::KnnAdjacency && self.k_neighbors == 0 {
            return Err("knn kernel needs k_neighbors >= 1".into());
        }
        if self.kind == KernelKind::ExpCosine && !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(format!("temperature must be > 0, got {}", self.temperature));
        }
        Ok(())
    }
}

/// Distance used when building k-NN graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KnnMetric {
    Euclidean,
    Cosine,
}

impl std::fmt::Display for KnnMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KnnMetric::Euclidean => write!(f, "euclidean"),
            KnnMetric::Cosine => write!(f, "cosine"),
        }
    }
}

/// Symmetric nonnegative weighted graph with zero diagonal.
///
/// Stores each undirected edge once as `(i, j, w)` with `i < j`; per-vertex
/// degrees and sorted adjacency lists are derived at construction.
#[derive(Debug, Clone)]
pub struct SparseSimilarity {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
    degree: Vec<f64>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl SparseSimilarity {
    pub fn from_entries(
        n: usize,
        mut entries: Vec<(usize, usize, f64)>,
    ) -> Result<Self, GraphError> {
        if n < 2 {
            return Err(GraphError::TooFewVertices(n));
        }
        for e in entries.iter_mut() {
            if e.0 == e.1 {
                return Err(GraphError::SelfLoop(e.0));
            }
            if e.0 > e.1 {
                *e = (e.1, e.0, e.2);
            }
            if e.1 >= n {
                return Err(GraphError::EdgeOutOfRange { i: e.0, j: e.1, n });
            }
            if e.2 < 0.0 || e.2.is_nan() {
                return Err(GraphError::NegativeWeight {
                    i: e.0,
                    j: e.1,
                    w: e.2,
                });
            }
        }
        entries.sort_by_key(|a| (a.0, a.1));
        entries.dedup_by(|later, first| {
            if later.0 == first.0 && later.1 == first.1 {
                first.2 += later.2;
                true
            } else {
                false
            }
        });
        entries.retain(|e| e.2 > 0.0);

        let mut degree = vec![0.0; n];
        let mut adjacency = vec![Vec::new(); n];
        for &(i, j, w) in &entries {
            degree[i] += w;
            degree[j] += w;
            adjacency[i].push((j, w));
            adjacency[j].push((i, w));
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(v, _)| v);
        }
        Ok(Self {
            n,
            entries,
            degree,
            adjacency,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Undirected edges `(i, j, w)` with `i < j`, sorted.
    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    /// W_ij; 0 off the stored support and on the diagonal.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        match self.adjacency[i].binary_search_by_key(&j, |&(v, _)| v) {
            Ok(pos) => self.adjacency[i][pos].1,
            Err(_) => 0.0,
        }
    }

    /// ||W||_1 = sum of all entries of the full symmetric matrix.
    pub fn total_weight(&self) -> f64 {
        2.0 * self.entries.iter().map(|e| e.2).sum::<f64>()
    }

    /// Dense W for oracle-scale work.
    pub fn dense(&self) -> Array2<f64> {
        let mut w = Array2::zeros((self.n, self.n));
        for &(i, j, weight) in &self.entries {
            w[[i, j]] = weight;
            w[[j, i]] = weight;
        }
        w
    }

    /// Dense unnormalized Laplacian D - W.
    pub fn laplacian(&self) -> Array2<f64> {
        let mut l = Array2::zeros((self.n, self.n));
        for (i, &d) in self.degree.iter().enumerate() {
            l[[i, i]] = d;
        }
        for &(i, j, w) in &self.entries {
            l[[i, j]] = -w;
            l[[j, i]] = -w;
        }
        l
    }

    /// The `rows x cols` block of W for two index batches; overlapping
    /// dataset indices land on the zero diagonal by construction.
    pub fn block(&self, rows: &[usize], cols: &[usize]) -> Array2<f64> {
        let mut w = Array2::zeros((rows.len(), cols.len()));
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                w[[a, b]] = self.weight(i, j);
            }
        }
        w
    }
}

/// Hard cluster assignment: labels in `0..k`. Individual clusters may be
/// empty (predictions sometimes skip a cluster); operations that need every
/// cluster populated, like [`ratio_cut`], check that themselves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    labels: Vec<usize>,
    k: usize,
}

impl Partition {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self, GraphError> {
        if labels.is_empty() {
            return Err(GraphError::TooFewVertices(0));
        }
        for (pos, &label) in labels.iter().enumerate() {
            if label >= k {
                return Err(GraphError::LabelOutOfRange { label, pos, k });
            }
        }
        Ok(Self { labels, k })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

/// Exact brute-force k-NN graph, symmetrized by union.
///
/// `W_ij = 1` when i is among j's k nearest neighbors or vice versa.
/// Distance ties break toward the smaller vertex index.
pub fn knn_graph(
    features: ArrayView2<'_, f64>,
    k_neighbors: usize,
    metric: KnnMetric,
) -> Result<SparseSimilarity, GraphError> {
    let n = features.nrows();
    if n < 2 {
        return Err(GraphError::TooFewVertices(n));
    }
    if k_neighbors == 0 || k_neighbors >= n {
        return Err(GraphError::BadNeighborCount { k: k_neighbors, n });
    }
    let norms: Vec<f64> = (0..n)
        .map(|i| features.row(i).dot(&features.row(i)).sqrt())
        .collect();
    if metric == KnnMetric::Cosine {
        if let Some(row) = norms.iter().position(|&v| v == 0.0) {
            return Err(GraphError::ZeroNormRow(row));
        }
    }

    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    let mut dists: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        dists.clear();
        for j in 0..n {
            if j == i {
                continue;
            }
            let d = match metric {
                KnnMetric::Euclidean => {
                    let diff = &features.row(i) - &features.row(j);
                    diff.dot(&diff)
                }
                KnnMetric::Cosine => {
                    1.0 - features.row(i).dot(&features.row(j)) / (norms[i] * norms[j])
                }
            };
            dists.push((d, j));
        }
        dists.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
        for &(_, j) in dists.iter().take(k_neighbors) {
            edges.push((i.min(j), i.max(j), 1.0));
        }
    }
    // Union symmetrization: duplicates collapse to weight 1.
    edges.sort_by_key(|a| (a.0, a.1));
    edges.dedup_by_key(|e| (e.0, e.1));
    SparseSimilarity::from_entries(n, edges)
}

/// Dense similarity block between two batches of representations.
///
/// Only the exponential-cosine kernel is a dense evaluation; k-NN adjacency
/// goes through [`SparseSimilarity::block`] and labels through
/// [`label_block`]. With `same_batch` set, the diagonal is zeroed to keep
/// the no-self-similarity convention.
pub fn kernel_block(
    left: ArrayView2<'_, f64>,
    right: ArrayView2<'_, f64>,
    cfg: &KernelConfig,
    same_batch: bool,
) -> Result<Array2<f64>, GraphError> {
    if cfg.kind != KernelKind::ExpCosine {
        return Err(GraphError::UnsupportedKernel(cfg.kind));
    }
    let tau = cfg.temperature;
    let norm = |row: ndarray::ArrayView1<'_, f64>, idx: usize| -> Result<f64, GraphError> {
        let v = row.dot(&row).sqrt();
        if v == 0.0 {
            Err(GraphError::ZeroNormRow(idx))
        } else {
            Ok(v)
        }
    };
    let left_norms: Vec<f64> = (0..left.nrows())
        .map(|i| norm(left.row(i), i))
        .collect::<Result<_, _>>()?;
    let right_norms: Vec<f64> = (0..right.nrows())
        .map(|j| norm(right.row(j), j))
        .collect::<Result<_, _>>()?;

    let mut w = Array2::zeros((left.nrows(), right.nrows()));
    for i in 0..left.nrows() {
        for j in 0..right.nrows() {
            if same_batch && i == j {
                continue;
            }
            let cos = left.row(i).dot(&right.row(j)) / (left_norms[i] * right_norms[j]);
            w[[i, j]] = (cos / tau).exp();
        }
    }
    Ok(w)
}

/// 0/1 block of label agreements.
pub fn label_block(labels_left: &[usize], labels_right: &[usize]) -> Array2<f64> {
    let mut w = Array2::zeros((labels_left.len(), labels_right.len()));
    for (i, &a) in labels_left.iter().enumerate() {
        for (j, &b) in labels_right.iter().enumerate() {
            if a == b {
                w[[i, j]] = 1.0;
            }
        }
    }
    w
}

/// Zero the block entries whose batches reference the same dataset index.
pub fn zero_index_collisions(w: &mut Array2<f64>, idx_left: &[usize], idx_right: &[usize]) {
    for (a, &i) in idx_left.iter().enumerate() {
        for (b, &j) in idx_right.iter().enumerate() {
            if i == j {
                w[[a, b]] = 0.0;
            }
        }
    }
}

/// Classical ratio-cut: half the sum over clusters of boundary weight over
/// cluster size.
pub fn ratio_cut(similarity: &SparseSimilarity, partition: &Partition) -> Result<f64, GraphError> {
    let sizes = partition.cluster_sizes();
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(GraphError::EmptyCluster(empty));
    }
    let labels = partition.labels();
    let mut boundary = vec![0.0; partition.k()];
    for &(i, j, w) in similarity.entries() {
        if labels[i] != labels[j] {
            boundary[labels[i]] += w;
            boundary[labels[j]] += w;
        }
    }
    Ok(0.5
        * boundary
            .iter()
            .zip(&sizes)
            .map(|(&cut, &size)| cut / size as f64)
            .sum::<f64>())
}

/// Same quantity through the Laplacian trace form; dual route kept for
/// cross-checking [`ratio_cut`].
pub fn ratio_cut_trace(
    similarity: &SparseSimilarity,
    partition: &Partition,
) -> Result<f64, GraphError> {
    let sizes = partition.cluster_sizes();
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(GraphError::EmptyCluster(empty));
    }
    let n = similarity.n();
    let k = partition.k();
    let mut f = Array2::zeros((n, k));
    for (i, &label) in partition.labels().iter().enumerate() {
        f[[i, label]] = 1.0 / (sizes[label] as f64).sqrt();
    }
    let lf = similarity.laplacian().dot(&f);
    let mut trace = 0.0;
    for l in 0..k {
        trace += f.column(l).dot(&lf.column(l));
    }
    Ok(0.5 * trace)
}

/// Write the graph as text: header `n k_neighbors metric`, then one
/// `i j w` triple per line with 17 significant digits.
pub fn write_graph<W: Write>(
    out: &mut W,
    similarity: &SparseSimilarity,
    k_neighbors: usize,
    metric: KnnMetric,
) -> Result<(), GraphError> {
    let mut text = String::new();
    writeln!(text, "{} {} {}", similarity.n(), k_neighbors, metric).unwrap();
    for &(i, j, w) in similarity.entries() {
        writeln!(text, "{i} {j} {w:.16e}").unwrap();
    }
    out.write_all(text.as_bytes())?;
    Ok(())
}

/// Read a graph produced by [`write_graph`].
pub fn read_graph<R: Read>(input: R) -> Result<(SparseSimilarity, usize, KnnMetric), GraphError> {
    let mut lines = BufReader::new(input).lines();
    let header = lines
        .next()
        .ok_or_else(|| GraphError::MalformedFile("empty file".into()))??;
    let mut parts = header.split_whitespace();
    let n: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| GraphError::MalformedFile("bad vertex count".into()))?;
    let k: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| GraphError::MalformedFile("bad k_neighbors".into()))?;
    let metric = match parts.next() {
        Some("euclidean") => KnnMetric::Euclidean,
        Some("cosine") => KnnMetric::Cosine,
        other => {
            return Err(GraphError::MalformedFile(format!(
                "unknown metric {other:?}"
            )))
        }
    };
    let mut entries = Vec::new();
    for (line_no, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let parse_err =
            || GraphError::MalformedFile(format!("bad edge on line {}", line_no + 2));
        let i: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(parse_err)?;
        let j: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(parse_err)?;
        let w: f64 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(parse_err)?;
        entries.push((i, j, w));
    }
    Ok((SparseSimilarity::from_entries(n, entries)?, k, metric))
}

pub fn write_graph_file(
    path: &Path,
    similarity: &SparseSimilarity,
    k_neighbors: usize,
    metric: KnnMetric,
) -> Result<(), GraphError> {
    let mut file = std::fs::File::create(path)?;
    write_graph(&mut file, similarity, k_neighbors, metric)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn path3() -> SparseSimilarity {
        SparseSimilarity::from_entries(3, vec![(0, 1, 1.0), (1, 2, 1.0)]).unwrap()
    }

    fn triangle() -> SparseSimilarity {
        SparseSimilarity::from_entries(3, vec![(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)]).unwrap()
    }

    #[test]
    fn degrees_and_total_weight() {
        let g = path3();
        assert_eq!(g.degree(), &[1.0, 2.0, 1.0]);
        assert_abs_diff_eq!(g.total_weight(), 4.0);
        assert_eq!(g.weight(0, 1), 1.0);
        assert_eq!(g.weight(1, 0), 1.0);
        assert_eq!(g.weight(0, 2), 0.0);
        assert_eq!(g.weight(1, 1), 0.0);
    }

    #[test]
    fn construction_rejects_bad_entries() {
        assert!(SparseSimilarity::from_entries(1, vec![]).is_err());
        assert!(SparseSimilarity::from_entries(3, vec![(0, 0, 1.0)]).is_err());
        assert!(SparseSimilarity::from_entries(3, vec![(0, 3, 1.0)]).is_err());
        assert!(SparseSimilarity::from_entries(3, vec![(0, 1, -0.5)]).is_err());
    }

    #[test]
    fn knn_line_example() {
        let pts = array![[0.0], [1.0], [10.0]];
        let g = knn_graph(pts.view(), 1, KnnMetric::Euclidean).unwrap();
        let edges: Vec<_> = g.entries().iter().map(|&(i, j, _)| (i, j)).collect();
        assert_eq!(edges, vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn knn_two_blobs_have_no_cross_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut pts = Vec::new();
        for i in 0..100 {
            let center = if i < 50 { 0.0 } else { 100.0 };
            pts.push([
                center + rng.random::<f64>(),
                center + rng.random::<f64>(),
            ]);
        }
        let features =
            Array2::from_shape_vec((100, 2), pts.iter().flatten().copied().collect()).unwrap();
        let g = knn_graph(features.view(), 5, KnnMetric::Euclidean).unwrap();
        // Exhaustive check: every edge stays within a blob.
        for &(i, j, _) in g.entries() {
            assert_eq!(i < 50, j < 50, "cross-blob edge ({i}, {j})");
        }
    }

    #[test]
    fn knn_invariant_under_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let features =
            Array2::from_shape_fn((24, 3), |_| rng.random::<f64>());
        let g = knn_graph(features.view(), 3, KnnMetric::Euclidean).unwrap();

        let perm: Vec<usize> = {
            let mut p: Vec<usize> = (0..24).collect();
            for i in (1..24).rev() {
                let j = rng.random_range(0..=i);
                p.swap(i, j);
            }
            p
        };
        let permuted = Array2::from_shape_fn((24, 3), |(i, c)| features[[perm[i], c]]);
        let gp = knn_graph(permuted.view(), 3, KnnMetric::Euclidean).unwrap();

        let mut mapped: Vec<(usize, usize)> = gp
            .entries()
            .iter()
            .map(|&(i, j, _)| {
                let (a, b) = (perm[i], perm[j]);
                (a.min(b), a.max(b))
            })
            .collect();
        mapped.sort_unstable();
        let original: Vec<(usize, usize)> =
            g.entries().iter().map(|&(i, j, _)| (i, j)).collect();
        assert_eq!(mapped, original);
    }

    #[test]
    fn kernel_block_frozen_values() {
        let cfg = KernelConfig::exp_cosine(1.0);
        let same = array![[1.0, 0.0], [1.0, 0.0]];
        let w = kernel_block(same.view(), same.view(), &cfg, false).unwrap();
        assert_abs_diff_eq!(w[[0, 1]], 1.0f64.exp(), epsilon = 1e-12);

        let ortho = array![[1.0, 0.0], [0.0, 1.0]];
        let w = kernel_block(ortho.view(), ortho.view(), &cfg, false).unwrap();
        assert_abs_diff_eq!(w[[0, 1]], 1.0, epsilon = 1e-12);

        // cos = 0.8 at tau = 0.5 -> exp(1.6).
        let cfg = KernelConfig::exp_cosine(0.5);
        let a = array![[1.0, 0.0]];
        let b = array![[0.8, 0.6]];
        let w = kernel_block(a.view(), b.view(), &cfg, false).unwrap();
        assert_abs_diff_eq!(w[[0, 0]], 1.6f64.exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(w[[0, 0]], 4.953032, epsilon = 1e-6);
    }

    #[test]
    fn kernel_block_same_batch_zeroes_diagonal() {
        let x = array![[1.0, 0.0], [0.5, 0.5]];
        let cfg = KernelConfig::exp_cosine(1.0);
        let w = kernel_block(x.view(), x.view(), &cfg, true).unwrap();
        assert_eq!(w[[0, 0]], 0.0);
        assert_eq!(w[[1, 1]], 0.0);
        assert!(w[[0, 1]] > 0.0);
    }

    #[test]
    fn kernel_block_transpose_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Array2::from_shape_fn((4, 3), |_| rng.random::<f64>() + 0.1);
        let b = Array2::from_shape_fn((5, 3), |_| rng.random::<f64>() + 0.1);
        let cfg = KernelConfig::exp_cosine(0.7);
        let ab = kernel_block(a.view(), b.view(), &cfg, false).unwrap();
        let ba = kernel_block(b.view(), a.view(), &cfg, false).unwrap();
        for i in 0..4 {
            for j in 0..5 {
                assert_abs_diff_eq!(ab[[i, j]], ba[[j, i]], epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn kernel_block_rejects_zero_rows_and_bad_kinds() {
        let x = array![[0.0, 0.0], [1.0, 0.0]];
        let cfg = KernelConfig::exp_cosine(1.0);
        assert!(matches!(
            kernel_block(x.view(), x.view(), &cfg, false),
            Err(GraphError::ZeroNormRow(0))
        ));
        let knn = KernelConfig::knn(5);
        assert!(matches!(
            kernel_block(x.view(), x.view(), &knn, false),
            Err(GraphError::UnsupportedKernel(KernelKind::KnnAdjacency))
        ));
    }

    #[test]
    fn label_block_examples() {
        let w = label_block(&[0, 1], &[1, 0]);
        assert_eq!(w, array![[0.0, 1.0], [1.0, 0.0]]);

        let mut w = label_block(&[0, 1], &[0, 1]);
        zero_index_collisions(&mut w, &[0, 1], &[0, 1]);
        assert_eq!(w, array![[0.0, 0.0], [0.0, 0.0]]);

        let mut w = label_block(&[2, 2, 2], &[2, 2, 2]);
        zero_index_collisions(&mut w, &[0, 1, 2], &[0, 1, 2]);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(w[[i, j]], if i == j { 0.0 } else { 1.0 });
            }
        }
    }

    #[test]
    fn ratio_cut_frozen_values() {
        let part = Partition::new(vec![0, 1, 1], 2).unwrap();
        assert_abs_diff_eq!(ratio_cut(&path3(), &part).unwrap(), 0.75, epsilon = 1e-12);

        let part = Partition::new(vec![0, 0, 1], 2).unwrap();
        assert_abs_diff_eq!(ratio_cut(&triangle(), &part).unwrap(), 1.5, epsilon = 1e-12);

        let single = Partition::new(vec![0, 0, 0], 1).unwrap();
        assert_eq!(ratio_cut(&triangle(), &single).unwrap(), 0.0);
    }

    #[test]
    fn ratio_cut_agrees_with_trace_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let n = rng.random_range(3..=12);
            let mut entries = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.random::<f64>() < 0.5 {
                        entries.push((i, j, rng.random::<f64>() * 3.0));
                    }
                }
            }
            let g = match SparseSimilarity::from_entries(n, entries) {
                Ok(g) => g,
                Err(_) => continue,
            };
            let k = rng.random_range(1..=3.min(n));
            let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
            for i in 0..n {
                let j = rng.random_range(0..n);
                labels.swap(i, j);
            }
            let part = Partition::new(labels, k).unwrap();
            let direct = ratio_cut(&g, &part).unwrap();
            let trace = ratio_cut_trace(&g, &part).unwrap();
            assert_abs_diff_eq!(direct, trace, epsilon = 1e-10);
        }
    }

    #[test]
    fn partition_validates() {
        assert!(Partition::new(vec![0, 2], 2).is_err());
        assert!(Partition::new(vec![], 2).is_err());
        assert!(Partition::new(vec![0, 1], 2).is_ok());
        // An empty cluster is allowed in the partition itself but rejected
        // by the ratio-cut.
        let with_empty = Partition::new(vec![0, 0, 0], 2).unwrap();
        assert!(matches!(
            ratio_cut(&path3(), &with_empty),
            Err(GraphError::EmptyCluster(1))
        ));
    }

    #[test]
    fn graph_roundtrip_through_text() {
        let g = triangle();
        let mut buf = Vec::new();
        write_graph(&mut buf, &g, 2, KnnMetric::Cosine).unwrap();
        let (back, k, metric) = read_graph(&buf[..]).unwrap();
        assert_eq!(k, 2);
        assert_eq!(metric, KnnMetric::Cosine);
        assert_eq!(back.entries(), g.entries());

        assert!(read_graph(&b"garbage"[..]).is_err());
    }
}
