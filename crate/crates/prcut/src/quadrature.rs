//! Gauss-Legendre quadrature on the unit interval.
//!
//! A rule of order `c` integrates any polynomial of degree <= 2c-1 exactly,
//! which is what makes the Poisson-binomial integral identities computable
//! without discretization error: the integrand `prod_i (1 - p_i t)` is a
//! polynomial of degree m, so a rule with `c >= (m+1)/2` nodes is exact.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use thiserror::Error;

/// Default cap on the rule order accepted by [`gauss_legendre_unit`].
pub const MAX_ORDER: usize = 256;

/// Newton iterations converge to this tolerance on the Legendre roots.
const ROOT_TOL: f64 = 1e-14;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QuadratureError {
    #[error("quadrature order must be at least 1")]
    ZeroOrder,
    #[error("quadrature order {order} exceeds the configured maximum {max}")]
    OrderTooLarge { order: usize, max: usize },
}

/// Nodes and weights for exact polynomial integration on [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    order: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Nodes in (0, 1), ascending.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Positive weights summing to 1.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Integrate `f` over [0, 1]; exact for polynomials of degree <= 2c-1.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &s)| s * f(t))
            .sum()
    }
}

/// Smallest order whose rule integrates a degree-`m` polynomial exactly.
pub fn min_order_for_degree(m: usize) -> usize {
    m / 2 + 1
}

/// Build the order-`c` Gauss-Legendre rule mapped to [0, 1].
///
/// Roots of the Legendre polynomial on [-1, 1] are found by Newton iteration
/// from the usual Chebyshev-like initial guesses, then mapped by
/// `t = (r + 1) / 2`, `s = w / 2`. Orders above [`MAX_ORDER`] are rejected;
/// use [`gauss_legendre_unit_with_limit`] when a caller legitimately needs
/// larger rules (the exact expected-ratio-cut oracle does, for big graphs).
pub fn gauss_legendre_unit(c: usize) -> Result<Arc<QuadratureRule>, QuadratureError> {
    gauss_legendre_unit_with_limit(c, MAX_ORDER)
}

/// As [`gauss_legendre_unit`] with an explicit order cap.
pub fn gauss_legendre_unit_with_limit(
    c: usize,
    max: usize,
) -> Result<Arc<QuadratureRule>, QuadratureError> {
    if c == 0 {
        return Err(QuadratureError::ZeroOrder);
    }
    if c > max {
        return Err(QuadratureError::OrderTooLarge { order: c, max });
    }

    static CACHE: RwLock<Option<HashMap<usize, Arc<QuadratureRule>>>> = RwLock::new(None);

    if let Some(cache) = CACHE.read().unwrap().as_ref() {
        if let Some(rule) = cache.get(&c) {
            return Ok(Arc::clone(rule));
        }
    }
    let rule = Arc::new(build_rule(c));
    let mut guard = CACHE.write().unwrap();
    let cache = guard.get_or_insert_with(HashMap::new);
    Ok(Arc::clone(cache.entry(c).or_insert(rule)))
}

fn build_rule(c: usize) -> QuadratureRule {
    let mut nodes = vec![0.0; c];
    let mut weights = vec![0.0; c];

    // Roots come in +/- pairs; solve for the first half and mirror.
    let half = c.div_ceil(2);
    for i in 0..half {
        let mut r = (std::f64::consts::PI * (i as f64 + 0.75) / (c as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(c, r);
            let step = p / d;
            r -= step;
            if step.abs() <= ROOT_TOL {
                break;
            }
        }
        // One clean-up iteration so the weight uses a fully converged root.
        let (p, d) = legendre_and_derivative(c, r);
        r -= p / d;
        let dp = legendre_and_derivative(c, r).1;
        let w = 2.0 / ((1.0 - r * r) * dp * dp);

        // cos() guesses start near +1; store ascending on [0,1].
        nodes[i] = (1.0 - r) / 2.0;
        weights[i] = w / 2.0;
        nodes[c - 1 - i] = (1.0 + r) / 2.0;
        weights[c - 1 - i] = w / 2.0;
    }
    if c % 2 == 1 {
        nodes[c / 2] = 0.5;
    }

    QuadratureRule {
        order: c,
        nodes,
        weights,
    }
}

/// Evaluate the degree-`n` Legendre polynomial and its derivative at `x`
/// via the three-term recurrence.
fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = x;
    for k in 2..=n {
        let kf = k as f64;
        let p_next = ((2.0 * kf - 1.0) * x * p - (kf - 1.0) * p_prev) / kf;
        p_prev = p;
        p = p_next;
    }
    let d = n as f64 * (x * p - p_prev) / (x * x - 1.0);
    (p, d)
}
