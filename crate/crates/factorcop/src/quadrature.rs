//! Gauss quadrature rules for the latent-variable integrals.
//!
//! Factor likelihoods integrate over latent uniforms on (0, 1); mixed-model
//! baselines integrate over normal random effects on the real line. Both
//! are served here:
//!
//! * [`QuadMode::Legendre`] — Gauss-Legendre nodes mapped affinely to
//!   (0, 1), the default;
//! * [`QuadMode::HermiteProbit`] — Gauss-Hermite nodes pushed through the
//!   normal CDF, i.e. the probit change of variables that turns a
//!   Gauss-Hermite rule into a rule on (0, 1);
//! * [`hermite`] — the raw Gauss-Hermite rule (physicists' weight
//!   `exp(-x^2)`) with weights normalized to sum to one, for integrals
//!   against a normal density.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::special::norm_cdf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadMode {
    Legendre,
    HermiteProbit,
}

impl std::fmt::Display for QuadMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            QuadMode::Legendre => write!(f, "legendre"),
            QuadMode::HermiteProbit => write!(f, "hermite-probit"),
        }
    }
}

/// Nodes inside (0, 1) with positive weights summing to one.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadratureRule<T> {
    pub mode: QuadMode,
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> QuadratureRule<T> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Approximates the integral of `f` over (0, 1).
    pub fn integrate(&self, mut f: impl FnMut(T) -> T) -> T {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&v, &w)| w * f(v))
            .sum()
    }
}

/// Default number of quadrature points for the factor likelihoods.
pub const DEFAULT_QUAD_POINTS: usize = 15;

/// Default rule for the factor likelihoods: the probit-mapped
/// Gauss-Hermite rule. For Gaussian links it is near-exact at 15 points
/// (the latent integrand is a Gaussian in probit space), where a plain
/// Legendre rule of the same size leaves per-subject errors of order 1e-3.
pub const DEFAULT_QUAD_MODE: QuadMode = QuadMode::HermiteProbit;

/// Largest supported Gauss-Hermite rule.
pub const HERMITE_MAX: usize = 180;

/// Builds an `n`-point rule on (0, 1). Errors when `n < 2`.
pub fn make_quadrature<T: Real>(mode: QuadMode, n: usize) -> Result<QuadratureRule<T>> {
    if n < 2 {
        return Err(Error::Domain(format!(
            "quadrature needs at least 2 points, got {n}"
        )));
    }
    if mode == QuadMode::HermiteProbit && n > HERMITE_MAX {
        return Err(Error::Domain(format!(
            "hermite-probit rules support at most {HERMITE_MAX} points, got {n}"
        )));
    }
    let (nodes, weights): (Vec<T>, Vec<T>) = match mode {
        QuadMode::Legendre => {
            let (x, w) = legendre(n);
            // map (-1, 1) to (0, 1); the 1/2 Jacobian makes weights sum to 1
            (
                x.into_iter().map(|v| T::half() * (v + T::one())).collect(),
                w.into_iter().map(|v| T::half() * v).collect(),
            )
        }
        QuadMode::HermiteProbit => {
            let (x, w) = hermite::<T>(n);
            let root2 = T::of(std::f64::consts::SQRT_2);
            // Probit images of extreme Hermite nodes can round onto 0 or 1;
            // their weights are below machine epsilon, so drop them.
            let mut nodes = Vec::with_capacity(n);
            let mut weights = Vec::with_capacity(n);
            for (z, wi) in x.into_iter().zip(w) {
                let v = norm_cdf(root2 * z);
                if v > T::zero() && v < T::one() && nodes.last().is_none_or(|&prev| v > prev) {
                    nodes.push(v);
                    weights.push(wi);
                }
            }
            (nodes, weights)
        }
    };
    let total: T = weights.iter().copied().sum();
    let weights = weights.into_iter().map(|w| w / total).collect();
    Ok(QuadratureRule {
        mode,
        nodes,
        weights,
    })
}

/// Gauss-Legendre nodes and weights on (-1, 1).
fn legendre<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    let mut nodes = vec![T::zero(); n];
    let mut weights = vec![T::zero(); n];
    let tol = T::epsilon() * T::of(4.0);
    let nf = T::of(n as f64);
    for i in 0..n.div_ceil(2) {
        // Chebyshev-based initial guess for the i-th root
        let mut x = T::of((std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos());
        let mut dp = T::one();
        for _ in 0..100 {
            // recurrence for P_n(x) and its derivative
            let mut p0 = T::one();
            let mut p1 = x;
            for k in 2..=n {
                let kf = T::of(k as f64);
                let p2 = ((T::two() * kf - T::one()) * x * p1 - (kf - T::one()) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (x * p1 - p0) / (x * x - T::one());
            let step = p1 / dp;
            x -= step;
            if step.abs() <= tol {
                break;
            }
        }
        let w = T::two() / ((T::one() - x * x) * dp * dp);
        nodes[i] = -x;
        weights[i] = w;
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Gauss-Hermite rule (weight `exp(-x^2)`) with weights normalized to sum
/// to one, i.e. ready-made for expectations against N(0, 1/2)-style
/// integrals after the usual `sqrt(2) sigma` substitution.
pub fn hermite<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    // the unscaled orthonormal recurrence overflows past ~180 nodes; the
    // artifact never needs more than 50
    assert!(n <= HERMITE_MAX, "hermite rules support n <= {HERMITE_MAX}");
    let mut nodes = vec![T::zero(); n];
    let mut weights = vec![T::zero(); n];
    let tol = T::epsilon() * T::of(16.0);
    let pi_quarter = T::of(std::f64::consts::PI.powf(-0.25));
    let nf = n as f64;
    let mut z = T::zero();
    for i in 0..n.div_ceil(2) {
        // standard initial guesses marching inward from the largest root
        z = match i {
            0 => T::of((2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0)),
            1 => z - T::of(1.14 * nf.powf(0.426)) / z,
            2 => T::of(1.86) * z - T::of(0.86) * nodes_guess(&nodes, n, 0),
            3 => T::of(1.91) * z - T::of(0.91) * nodes_guess(&nodes, n, 1),
            _ => T::two() * z - nodes_guess(&nodes, n, i - 2),
        };
        let mut pp = T::one();
        for _ in 0..100 {
            // orthonormal Hermite recurrence
            let mut p1 = pi_quarter;
            let mut p2 = T::zero();
            for j in 0..n {
                let jf = T::of(j as f64);
                let p3 = p2;
                p2 = p1;
                p1 = z * (T::two() / (jf + T::one())).sqrt() * p2
                    - (jf / (jf + T::one())).sqrt() * p3;
            }
            pp = (T::two() * T::of(nf)).sqrt() * p2;
            let step = p1 / pp;
            z -= step;
            if step.abs() <= tol {
                break;
            }
        }
        nodes[i] = z;
        weights[i] = T::two() / (pp * pp);
        nodes[n - 1 - i] = -z;
        weights[n - 1 - i] = weights[i];
    }
    // normalize: raw weights sum to sqrt(pi)
    let total: T = weights.iter().copied().sum();
    for w in &mut weights {
        *w /= total;
    }
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

fn nodes_guess<T: Real>(nodes: &[T], _n: usize, idx: usize) -> T {
    nodes[idx]
}
