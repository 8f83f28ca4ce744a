//! Poisson-binomial expectations and the integral bounds built on them.
//!
//! For Z a sum of independent Bernoulli(alpha_i) variables, the quantity
//! `E[1/(1+Z)]` equals the integral of `prod_i (1 - alpha_i t)` over [0, 1],
//! a degree-m polynomial that Gauss-Legendre quadrature integrates exactly.
//! Two more routes to the same number (PMF summation, inclusion-exclusion
//! over subsets) are kept as independent oracles, plus the closed-form upper
//! bound `1/((m+1)*mean)` and a Monte-Carlo batch-subset bound.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::quadrature::{self, QuadratureError};

/// Subset enumeration cost doubles per element; hard limit for the oracle.
pub const MAX_INCLUSION_EXCLUSION: usize = 12;

#[derive(Debug, Error, PartialEq)]
pub enum PoissonError {
    #[error("Bernoulli parameter {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("inclusion-exclusion limited to m <= {max}, got m = {m}")]
    TooManyTerms { m: usize, max: usize },
    #[error("inclusion probability must lie in (0, 1), got {0}")]
    InvalidInclusionProbability(f64),
    #[error("Monte-Carlo estimate needs at least one sample")]
    ZeroSamples,
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Parameters of a Poisson-binomial variable: m probabilities in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliProfile {
    probs: Vec<f64>,
}

impl BernoulliProfile {
    pub fn new(probs: Vec<f64>) -> Result<Self, PoissonError> {
        for &a in &probs {
            if !(0.0..=1.0).contains(&a) || a.is_nan() {
                return Err(PoissonError::InvalidProbability(a));
            }
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Mean parameter; 0 for the empty profile.
    pub fn mean(&self) -> f64 {
        if self.probs.is_empty() {
            0.0
        } else {
            self.probs.iter().sum::<f64>() / self.probs.len() as f64
        }
    }
}

/// Which route computes `E[1/(1+Z)]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpectMethod {
    /// Exact quadrature of the product polynomial (the production path).
    Quadrature,
    /// Sum P(Z=i)/(1+i) over the convolved PMF.
    Pmf,
    /// Signed sum over all subsets; independent oracle, m <= 12 only.
    InclusionExclusion,
}

/// `prod_i (1 - probs[i] * t)` in log space. Exact-zero factors short-circuit
/// to 0 so the log never sees a non-positive argument.
pub(crate) fn product_one_minus(probs: &[f64], t: f64) -> f64 {
    let mut log_sum = 0.0;
    for &a in probs {
        let factor = 1.0 - a * t;
        if factor <= 0.0 {
            return 0.0;
        }
        log_sum += factor.ln();
    }
    log_sum.exp()
}

/// PMF of the Poisson binomial via iterative convolution, O(m^2).
pub fn pb_pmf(profile: &BernoulliProfile) -> Vec<f64> {
    let mut pmf = vec![1.0];
    for &a in &profile.probs {
        let mut next = vec![0.0; pmf.len() + 1];
        for (i, &p) in pmf.iter().enumerate() {
            next[i] += p * (1.0 - a);
            next[i + 1] += p * a;
        }
        pmf = next;
    }
    pmf
}

/// `E[1/(1+Z)]` by the requested route. All routes agree to ~1e-10.
pub fn pb_inv1p_expect(
    profile: &BernoulliProfile,
    method: ExpectMethod,
) -> Result<f64, PoissonError> {
    let m = profile.len();
    match method {
        ExpectMethod::Quadrature => {
            if m == 0 {
                return Ok(1.0);
            }
            let rule = quadrature::gauss_legendre_unit(quadrature::min_order_for_degree(m))?;
            Ok(rule.integrate(|t| product_one_minus(&profile.probs, t)))
        }
        ExpectMethod::Pmf => {
            let pmf = pb_pmf(profile);
            Ok(pmf
                .iter()
                .enumerate()
                .map(|(i, &p)| p / (i as f64 + 1.0))
                .sum())
        }
        ExpectMethod::InclusionExclusion => {
            if m > MAX_INCLUSION_EXCLUSION {
                return Err(PoissonError::TooManyTerms {
                    m,
                    max: MAX_INCLUSION_EXCLUSION,
                });
            }
            let mut total = 0.0;
            for mask in 0u32..(1 << m) {
                let size = mask.count_ones();
                let mut prod = 1.0;
                for (j, &a) in profile.probs.iter().enumerate() {
                    if mask >> j & 1 == 1 {
                        prod *= a;
                    }
                }
                let sign = if size % 2 == 0 { 1.0 } else { -1.0 };
                total += sign * prod / (size as f64 + 1.0);
            }
            Ok(total)
        }
    }
}

/// Closed-form bound `1/((m+1)*mean)`; +inf when the mean is 0.
pub fn integral_upper_bound(profile: &BernoulliProfile) -> f64 {
    let mean = profile.mean();
    if mean == 0.0 {
        f64::INFINITY
    } else {
        1.0 / ((profile.len() as f64 + 1.0) * mean)
    }
}

/// Monte-Carlo estimate of the batch-subset upper bound: the expectation over
/// random subsets S (each index kept with probability `inclusion_prob`) of the
/// integral of `prod_{s in S} (1 - alpha_s t)^(1/inclusion_prob)`.
pub fn batch_power_bound(
    profile: &BernoulliProfile,
    inclusion_prob: f64,
    samples: usize,
    seed: u64,
) -> Result<f64, PoissonError> {
    batch_power_bound_detailed(profile, inclusion_prob, samples, seed).map(|(mean, _)| mean)
}

/// As [`batch_power_bound`], also returning the standard error of the mean.
pub fn batch_power_bound_detailed(
    profile: &BernoulliProfile,
    inclusion_prob: f64,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64), PoissonError> {
    if !(inclusion_prob > 0.0 && inclusion_prob < 1.0) {
        return Err(PoissonError::InvalidInclusionProbability(inclusion_prob));
    }
    if samples == 0 {
        return Err(PoissonError::ZeroSamples);
    }
    let inv_gamma = 1.0 / inclusion_prob;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut subset = Vec::with_capacity(profile.len());
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        subset.clear();
        for &a in &profile.probs {
            if rng.random::<f64>() < inclusion_prob {
                subset.push(a);
            }
        }
        let value = adaptive_integral(
            &|t| product_one_minus(&subset, t).powf(inv_gamma),
            0.0,
            1.0,
            1e-10,
        );
        sum += value;
        sum_sq += value * value;
    }
    let n = samples as f64;
    let mean = sum / n;
    let variance = (sum_sq / n - mean * mean).max(0.0);
    let stderr = if samples > 1 {
        (variance / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok((mean, stderr))
}

/// Adaptive Simpson integration; the power-bound integrand is smooth except
/// for a root-type endpoint at t = 1 when some alpha equals 1.
fn adaptive_integral(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 40)
}
