//! Independent oracles and the self-check suites behind `prcut verify`.
//!
//! Everything here recomputes a quantity by a route the production code does
//! not take: exhaustive enumeration of random assignments, elementary
//! calculus on polynomial coefficients, or finite differences. The CLI runs
//! the suites at full size; the acceptance tests call the same functions.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::graph::SparseSimilarity;
use crate::model::{backward, forward, init_mlp, MlpModel, MlpSpec};
use crate::objective::{
    exact_expected_rcut, expected_rcut_column, lrc_grad, lrc_loss, offline_lrc_grad,
    offline_lrc_loss, AssignmentMatrix, GradMode,
};
use crate::poisson::{
    batch_power_bound_detailed, integral_upper_bound, pb_inv1p_expect, BernoulliProfile,
    ExpectMethod,
};
use crate::quadrature;

/// Outcome of one verification suite.
#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub cases: usize,
    pub worst: f64,
    pub detail: String,
}

impl SuiteResult {
    fn new(name: &'static str, passed: bool, cases: usize, worst: f64, detail: String) -> Self {
        Self {
            name,
            passed,
            cases,
            worst,
            detail,
        }
    }
}

/// Brute-force expectation of the stochastic ratio-cut of one cluster:
/// enumerate all 2^n assignment vectors, weight by their probabilities, and
/// average `sum_{i<j} W_ij (f_i - f_j)^2` with `f = a / sqrt(sum a)`.
pub fn enumerate_rcut_column(similarity: &SparseSimilarity, p: &[f64]) -> f64 {
    let n = similarity.n();
    assert!(n <= 20, "enumeration oracle limited to small graphs");
    let mut expectation = 0.0;
    for mask in 0u32..(1 << n) {
        let mut prob = 1.0;
        let mut size = 0u32;
        for (i, &pi) in p.iter().enumerate() {
            if mask >> i & 1 == 1 {
                prob *= pi;
                size += 1;
            } else {
                prob *= 1.0 - pi;
            }
        }
        if prob == 0.0 || size == 0 {
            // Empty cluster: every f_i shares the 0/0 := 1 convention, so
            // all differences vanish.
            continue;
        }
        let scale = 1.0 / (size as f64).sqrt();
        let mut value = 0.0;
        for &(i, j, w) in similarity.entries() {
            let fi = if mask >> i & 1 == 1 { scale } else { 0.0 };
            let fj = if mask >> j & 1 == 1 { scale } else { 0.0 };
            value += w * (fi - fj) * (fi - fj);
        }
        expectation += prob * value;
    }
    expectation
}

/// Central finite differences of the batch bound loss, with the cluster
/// masses carrying their 1/n_eff per-entry sensitivity. This is the exact
/// function the analytic [`lrc_grad`] differentiates.
pub fn fd_lrc_grad(
    w_block: ArrayView2<'_, f64>,
    p_left: ArrayView2<'_, f64>,
    p_right: ArrayView2<'_, f64>,
    pbar: &[f64],
    n_eff: usize,
    step: f64,
) -> (Array2<f64>, Array2<f64>) {
    let eval = |pl: &Array2<f64>, pr: &Array2<f64>, mass_shift: (usize, f64)| -> f64 {
        let mut masses = pbar.to_vec();
        masses[mass_shift.0] += mass_shift.1 / n_eff as f64;
        lrc_loss(w_block, pl.view(), pr.view(), &masses, false).unwrap()
    };
    let mut d_left = Array2::zeros(p_left.raw_dim());
    let mut d_right = Array2::zeros(p_right.raw_dim());
    let base_left = p_left.to_owned();
    let base_right = p_right.to_owned();
    for i in 0..p_left.nrows() {
        for l in 0..p_left.ncols() {
            let mut plus = base_left.clone();
            plus[[i, l]] += step;
            let mut minus = base_left.clone();
            minus[[i, l]] -= step;
            d_left[[i, l]] = (eval(&plus, &base_right, (l, step))
                - eval(&minus, &base_right, (l, -step)))
                / (2.0 * step);
        }
    }
    for j in 0..p_right.nrows() {
        for l in 0..p_right.ncols() {
            let mut plus = base_right.clone();
            plus[[j, l]] += step;
            let mut minus = base_right.clone();
            minus[[j, l]] -= step;
            d_right[[j, l]] = (eval(&base_left, &plus, (l, step))
                - eval(&base_left, &minus, (l, -step)))
                / (2.0 * step);
        }
    }
    (d_left, d_right)
}

/// Central finite differences of [`offline_lrc_loss`].
pub fn fd_offline_grad(
    similarity: &SparseSimilarity,
    p: ArrayView2<'_, f64>,
    step: f64,
) -> Array2<f64> {
    let mut grad = Array2::zeros(p.raw_dim());
    let base = p.to_owned();
    for i in 0..p.nrows() {
        for l in 0..p.ncols() {
            let mut plus = base.clone();
            plus[[i, l]] += step;
            let mut minus = base.clone();
            minus[[i, l]] -= step;
            grad[[i, l]] = (offline_lrc_loss(similarity, plus.view()).unwrap()
                - offline_lrc_loss(similarity, minus.view()).unwrap())
                / (2.0 * step);
        }
    }
    grad
}

fn random_profile(rng: &mut ChaCha8Rng, max_len: usize) -> BernoulliProfile {
    let m = rng.random_range(0..=max_len);
    BernoulliProfile::new((0..m).map(|_| rng.random::<f64>()).collect()).unwrap()
}

fn random_graph(rng: &mut ChaCha8Rng, n: usize, density: f64) -> SparseSimilarity {
    let mut entries = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < density {
                entries.push((i, j, rng.random::<f64>() * 2.0));
            }
        }
    }
    SparseSimilarity::from_entries(n, entries).unwrap()
}

fn random_stochastic(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Array2<f64> {
    let mut p = Array2::from_shape_fn((n, k), |_| rng.random::<f64>() + 1e-3);
    for mut row in p.rows_mut() {
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    p
}

/// Scaled max-abs deviation used by the gradient suites: entries are
/// compared relative to the largest finite-difference magnitude (with a
/// floor of 1 so that near-zero gradients compare absolutely).
fn grad_deviation(analytic: &Array2<f64>, reference: &Array2<f64>) -> f64 {
    let scale = reference
        .iter()
        .fold(1.0f64, |acc, &v| acc.max(v.abs()));
    analytic
        .iter()
        .zip(reference.iter())
        .fold(0.0f64, |acc, (&a, &f)| acc.max((a - f).abs() / scale))
}

/// Quadrature rules must integrate random polynomials of degree <= 2c-1
/// exactly (checked against the coefficient-wise analytic integral).
pub fn suite_quadrature_exactness() -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for c in 1..=32 {
        let rule = quadrature::gauss_legendre_unit(c).unwrap();
        for _ in 0..8 {
            let coeffs: Vec<f64> = (0..2 * c).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let numeric = rule.integrate(|t| coeffs.iter().rev().fold(0.0, |acc, &a| acc * t + a));
            let analytic: f64 = coeffs
                .iter()
                .enumerate()
                .map(|(d, &a)| a / (d as f64 + 1.0))
                .sum();
            worst = worst.max((numeric - analytic).abs());
            cases += 1;
        }
    }
    SuiteResult::new(
        "quadrature-exactness",
        worst <= 1e-12,
        cases,
        worst,
        format!("max |quadrature - analytic| = {worst:.3e} (tol 1e-12)"),
    )
}

/// Quadrature, PMF summation, and inclusion-exclusion must agree pairwise on
/// E[1/(1+Z)] for random profiles.
pub fn suite_three_oracles() -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    let cases = 500;
    for _ in 0..cases {
        let profile = random_profile(&mut rng, 12);
        let quad = pb_inv1p_expect(&profile, ExpectMethod::Quadrature).unwrap();
        let pmf = pb_inv1p_expect(&profile, ExpectMethod::Pmf).unwrap();
        let incl = pb_inv1p_expect(&profile, ExpectMethod::InclusionExclusion).unwrap();
        worst = worst
            .max((quad - pmf).abs())
            .max((quad - incl).abs())
            .max((pmf - incl).abs());
    }
    SuiteResult::new(
        "three-oracle-agreement",
        worst <= 1e-9,
        cases,
        worst,
        format!("max pairwise disagreement = {worst:.3e} (tol 1e-9)"),
    )
}

/// The closed-form integral bound must dominate the exact expectation.
pub fn suite_integral_bound() -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = f64::NEG_INFINITY;
    let mut cases = 0;
    while cases < 1000 {
        let profile = random_profile(&mut rng, 40);
        if profile.is_empty() || profile.mean() == 0.0 {
            continue;
        }
        let exact = pb_inv1p_expect(&profile, ExpectMethod::Quadrature).unwrap();
        let bound = integral_upper_bound(&profile);
        worst = worst.max(exact - bound);
        cases += 1;
    }
    SuiteResult::new(
        "integral-upper-bound",
        worst <= 1e-12,
        cases,
        worst,
        format!("max (exact - bound) = {worst:.3e} (slack tol 1e-12)"),
    )
}

/// Expected ratio-cut must stay below the scaled bound-loss chain.
pub fn suite_rc_bound_chain() -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst = f64::NEG_INFINITY;
    let cases = 200;
    for _ in 0..cases {
        let n = rng.random_range(3..=12);
        let k = rng.random_range(1..=3);
        let graph = random_graph(&mut rng, n, 0.6);
        let p = random_stochastic(&mut rng, n, k);
        let exact: f64 = (0..k)
            .map(|l| expected_rcut_column(&graph, &p.column(l).to_vec()).unwrap())
            .sum();
        let w = graph.dense();
        let means: Vec<f64> = (0..k).map(|l| p.column(l).sum() / n as f64).collect();
        let canonical = lrc_loss(w.view(), p.view(), p.view(), &means, false).unwrap();
        let bound = (std::f64::consts::E.powi(2) / (2.0 * n as f64)) * canonical;
        worst = worst.max(exact - bound);
    }
    SuiteResult::new(
        "rc-bound-chain",
        worst <= 1e-9,
        cases,
        worst,
        format!("max (exact RC - scaled bound) = {worst:.3e} (slack tol 1e-9)"),
    )
}

/// The Monte-Carlo subset-power estimate must dominate the exact integral
/// within three standard errors.
pub fn suite_batch_estimate() -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst = f64::NEG_INFINITY;
    let cases: usize = 50;
    for case in 0..cases {
        let m = rng.random_range(1..=10);
        let profile =
            BernoulliProfile::new((0..m).map(|_| rng.random::<f64>()).collect()).unwrap();
        let gamma = rng.random_range(0.2..0.8);
        let exact = pb_inv1p_expect(&profile, ExpectMethod::Quadrature).unwrap();
        let (estimate, stderr) =
            batch_power_bound_detailed(&profile, gamma, 2000, 9000 + case as u64).unwrap();
        worst = worst.max(exact - (estimate + 3.0 * stderr));
    }
    SuiteResult::new(
        "batch-estimate-bound",
        worst <= 0.0,
        cases,
        worst,
        format!("max (exact - estimate - 3*stderr) = {worst:.3e} (must be <= 0)"),
    )
}

/// Quadrature evaluation of the expected ratio-cut must match exhaustive
/// enumeration over all 2^n assignments, and hard assignments must reduce to
/// sum of cut/|C|.
pub fn suite_theorem1_enumeration() -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst = 0.0f64;
    let cases = 100;
    for _ in 0..cases {
        let n = rng.random_range(3..=10);
        let graph = random_graph(&mut rng, n, 0.7);
        let p: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let quadrature_value = expected_rcut_column(&graph, &p).unwrap();
        let enumerated = enumerate_rcut_column(&graph, &p);
        worst = worst.max((quadrature_value - enumerated).abs());
    }

    // Hard one-hot assignments: exact value is sum over clusters of
    // boundary weight over cluster size.
    let mut det_worst = 0.0f64;
    for _ in 0..20 {
        let n = rng.random_range(4..=10);
        let k = rng.random_range(2..=3);
        let graph = random_graph(&mut rng, n, 0.7);
        let labels: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
        let mut p = Array2::zeros((n, k));
        for (i, &l) in labels.iter().enumerate() {
            p[[i, l]] = 1.0;
        }
        let assignment = AssignmentMatrix::new(p).unwrap();
        let value = exact_expected_rcut(&graph, &assignment).unwrap();
        let mut sizes = vec![0usize; k];
        for &l in &labels {
            sizes[l] += 1;
        }
        let mut cuts = vec![0.0; k];
        for &(i, j, w) in graph.entries() {
            if labels[i] != labels[j] {
                cuts[labels[i]] += w;
                cuts[labels[j]] += w;
            }
        }
        let reference: f64 = cuts
            .iter()
            .zip(&sizes)
            .map(|(&c, &s)| c / s as f64)
            .sum();
        det_worst = det_worst.max((value - reference).abs());
    }
    let worst_all = worst.max(det_worst);
    SuiteResult::new(
        "theorem1-enumeration",
        worst <= 1e-9 && det_worst <= 1e-10,
        cases + 20,
        worst_all,
        format!(
            "max |quadrature - enumeration| = {worst:.3e} (tol 1e-9), \
             deterministic reduction error = {det_worst:.3e} (tol 1e-10)"
        ),
    )
}

/// Analytic batch gradient vs central finite differences.
pub fn suite_online_gradient() -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst = 0.0f64;
    let cases = 50;
    for _ in 0..cases {
        let b = 8;
        let k = 3;
        let w = Array2::from_shape_fn((b, b), |_| rng.random::<f64>());
        let pl = random_stochastic(&mut rng, b, k);
        let pr = random_stochastic(&mut rng, b, k);
        let mut pbar: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.2).collect();
        let sum: f64 = pbar.iter().sum();
        pbar.iter_mut().for_each(|m| *m /= sum);

        let (al, ar) = lrc_grad(w.view(), pl.view(), pr.view(), &pbar, b, GradMode::Analytic)
            .unwrap();
        let (fl, fr) = fd_lrc_grad(w.view(), pl.view(), pr.view(), &pbar, b, 1e-6);
        worst = worst.max(grad_deviation(&al, &fl)).max(grad_deviation(&ar, &fr));
    }
    SuiteResult::new(
        "gradient-online-fd",
        worst <= 1e-6,
        cases,
        worst,
        format!("max scaled deviation = {worst:.3e} (tol 1e-6)"),
    )
}

/// Offline full-dataset gradient vs central finite differences.
pub fn suite_offline_gradient() -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut worst = 0.0f64;
    let cases = 50;
    for _ in 0..cases {
        let n = 15;
        let k = 3;
        let graph = random_graph(&mut rng, n, 0.5);
        let p = random_stochastic(&mut rng, n, k);
        let assignment = AssignmentMatrix::new(p.clone()).unwrap();
        let analytic = offline_lrc_grad(&graph, &assignment).unwrap();
        let fd = fd_offline_grad(&graph, p.view(), 1e-6);
        worst = worst.max(grad_deviation(&analytic, &fd));
    }
    SuiteResult::new(
        "gradient-offline-fd",
        worst <= 1e-6,
        cases,
        worst,
        format!("max scaled deviation = {worst:.3e} (tol 1e-6)"),
    )
}

/// Full-network backward pass vs per-parameter central finite differences.
pub fn suite_network_gradient() -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut worst = 0.0f64;
    let cases = 50;
    for case in 0..cases {
        let wn = case % 2 == 0;
        let spec = MlpSpec::new(vec![5, 8, 3], wn).unwrap();
        let model = init_mlp(&spec, 5000 + case as u64);
        let b = 4;
        let x = Array2::from_shape_fn((b, 5), |_| rng.random::<f64>() * 2.0 - 1.0);
        let dp = Array2::from_shape_fn((b, 3), |_| rng.random::<f64>() * 2.0 - 1.0);

        let (_, cache) = forward(&model, x.view()).unwrap();
        let analytic = backward(&model, &cache, dp.view()).unwrap();
        let fd = fd_network_grad(&model, &x, &dp, 1e-6);
        let scale = fd.iter().fold(1.0f64, |acc, &v| acc.max(v.abs()));
        for (&a, &f) in analytic.iter().zip(&fd) {
            worst = worst.max((a - f).abs() / scale);
        }
    }
    SuiteResult::new(
        "gradient-network-fd",
        worst <= 1e-5,
        cases,
        worst,
        format!("max scaled deviation = {worst:.3e} (tol 1e-5)"),
    )
}

/// Per-parameter central differences of `<dP, P(theta)>`.
pub fn fd_network_grad(
    model: &MlpModel,
    x: &Array2<f64>,
    d_probs: &Array2<f64>,
    step: f64,
) -> Vec<f64> {
    let loss = |m: &MlpModel| -> f64 {
        let (p, _) = forward(m, x.view()).unwrap();
        (&p * d_probs).sum()
    };
    let flat = model.flatten();
    let mut fd = vec![0.0; flat.len()];
    let mut probe = model.clone();
    for i in 0..flat.len() {
        let mut perturbed = flat.clone();
        perturbed[i] += step;
        probe.load_flat(&perturbed).unwrap();
        let plus = loss(&probe);
        perturbed[i] -= 2.0 * step;
        probe.load_flat(&perturbed).unwrap();
        let minus = loss(&probe);
        fd[i] = (plus - minus) / (2.0 * step);
    }
    fd
}

/// Every verification suite, in report order.
pub fn run_all_suites() -> Vec<SuiteResult> {
    vec![
        suite_quadrature_exactness(),
        suite_three_oracles(),
        suite_integral_bound(),
        suite_rc_bound_chain(),
        suite_batch_estimate(),
        suite_theorem1_enumeration(),
        suite_online_gradient(),
        suite_offline_gradient(),
        suite_network_gradient(),
    ]
}
