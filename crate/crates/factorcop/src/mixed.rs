//! Random-effect baselines: random-intercept (RI) and
//! random-intercept-plus-slope (RIS) models with the same marginal
//! families as the factor-copula models.
//!
//! The marginal likelihood integrates the conditional GLM/latent-probit
//! density over independent normal random effects with a fixed
//! Gauss-Hermite rule (15 nodes per random dimension, tensorized for RIS),
//! mirroring the quadrature used by the dependence models so the
//! model-comparison studies stay on equal numeric footing.

use serde::{Deserialize, Serialize};

use crate::dataset::{LongitudinalDataset, Observation, ResponseKind, Subject};
use crate::error::{Error, Result};
use crate::marginals::{param_names, MarginalParams};
use crate::optim::{self, NelderMead};
use crate::quadrature::hermite;
use crate::real::Real;
use crate::special::{ln_gamma, norm_cdf};

/// Random-effect structure: intercept only, or intercept plus a scaled
/// time slope with design row `(1, slope_scale * t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixedSpec<T> {
    pub n_random: u8,
    /// Multiplier on the time covariate in the slope design column
    /// (0.1 in the simulation studies; 1.0 for real-data fits).
    pub slope_scale: T,
    /// Gauss-Hermite nodes per random dimension.
    pub quad_points: usize,
}

impl<T: Real> MixedSpec<T> {
    pub fn random_intercept() -> Self {
        MixedSpec {
            n_random: 1,
            slope_scale: T::one(),
            quad_points: 15,
        }
    }

    pub fn random_intercept_slope(slope_scale: T) -> Self {
        MixedSpec {
            n_random: 2,
            slope_scale,
            quad_points: 15,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.n_random == 1 || self.n_random == 2) {
            return Err(Error::Domain("n_random must be 1 or 2".into()));
        }
        if self.quad_points < 2 {
            return Err(Error::Domain(
                "mixed quadrature needs at least 2 points".into(),
            ));
        }
        Ok(())
    }
}

/// Parameters of a mixed model: the marginal block plus the random-effect
/// variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedParams<T> {
    pub marginal: MarginalParams<T>,
    /// Random-effect variances `V[b_k]`, one per random dimension.
    pub var_b: Vec<T>,
}

impl<T: Real> MixedParams<T> {
    pub fn dim(&self) -> usize {
        self.marginal.dim() + self.var_b.len()
    }
}

/// Fitted mixed model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixedFit<T> {
    pub spec: MixedSpec<T>,
    pub family: ResponseKind,
    pub params: MixedParams<T>,
    pub se: Vec<T>,
    pub loglik: T,
    pub aic: T,
    pub bic: T,
    pub dim: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

const LN_FLOOR: f64 = -690.775527898;

fn conditional_ln_pdf<T: Real>(
    kind: ResponseKind,
    params: &MixedParams<T>,
    obs: &Observation<T>,
    shift: T,
) -> T {
    let eta = obs
        .covariates
        .iter()
        .zip(&params.marginal.beta)
        .map(|(&x, &b)| x * b)
        .sum::<T>()
        + shift;
    match kind {
        ResponseKind::GammaLog => {
            let kappa = params.marginal.dispersion.expect("validated");
            let mu = eta.exp();
            kappa * (kappa / mu).ln() - ln_gamma(kappa) + (kappa - T::one()) * obs.y.ln()
                - kappa * obs.y / mu
        }
        ResponseKind::NormalIdentity => {
            let phi = params.marginal.dispersion.expect("validated");
            let r = obs.y - eta;
            -T::half() * (T::two() * T::pi() * phi).ln() - r * r / (T::two() * phi)
        }
        ResponseKind::BinaryProbit => {
            let p = if obs.y == T::zero() {
                norm_cdf(-eta)
            } else {
                norm_cdf(eta)
            };
            if p > T::underflow_floor() {
                p.ln()
            } else {
                T::of(LN_FLOOR)
            }
        }
        ResponseKind::OrdinalProbit { k } => {
            let th = params.marginal.thresholds.as_ref().expect("validated");
            let c = obs.y.to_f64().unwrap_or(1.0) as usize;
            let hi = if c >= k {
                T::one()
            } else {
                norm_cdf(th[c - 1] - eta)
            };
            let lo = if c <= 1 {
                T::zero()
            } else {
                norm_cdf(th[c - 2] - eta)
            };
            let p = hi - lo;
            if p > T::underflow_floor() {
                p.ln()
            } else {
                T::of(LN_FLOOR)
            }
        }
    }
}

/// Random-effect design row `d_ij`.
#[inline]
fn design_row<T: Real>(spec: &MixedSpec<T>, time: T) -> (T, T) {
    (T::one(), spec.slope_scale * time)
}

fn subject_mixed_loglik<T: Real>(
    kind: ResponseKind,
    spec: &MixedSpec<T>,
    params: &MixedParams<T>,
    subject: &Subject<T>,
    nodes: &[T],
    ln_w: &[T],
    underflows: &mut usize,
) -> T {
    let root2 = T::of(std::f64::consts::SQRT_2);
    let sd0 = params.var_b[0].sqrt();
    if spec.n_random == 1 {
        let mut best = T::neg_infinity();
        let mut sums: Vec<T> = Vec::with_capacity(nodes.len());
        for (q, &x) in nodes.iter().enumerate() {
            let b0 = root2 * sd0 * x;
            let s: T = subject
                .observations
                .iter()
                .map(|o| conditional_ln_pdf(kind, params, o, b0))
                .sum::<T>()
                + ln_w[q];
            if s > best {
                best = s;
            }
            sums.push(s);
        }
        finish_lse(best, &sums, underflows)
    } else {
        let sd1 = params.var_b[1].sqrt();
        let mut best = T::neg_infinity();
        let mut sums: Vec<T> = Vec::with_capacity(nodes.len() * nodes.len());
        for (q0, &x0) in nodes.iter().enumerate() {
            let b0 = root2 * sd0 * x0;
            for (q1, &x1) in nodes.iter().enumerate() {
                let b1 = root2 * sd1 * x1;
                let s: T = subject
                    .observations
                    .iter()
                    .map(|o| {
                        let (_, d1) = design_row(spec, o.time);
                        conditional_ln_pdf(kind, params, o, b0 + d1 * b1)
                    })
                    .sum::<T>()
                    + ln_w[q0]
                    + ln_w[q1];
                if s > best {
                    best = s;
                }
                sums.push(s);
            }
        }
        finish_lse(best, &sums, underflows)
    }
}

fn finish_lse<T: Real>(best: T, sums: &[T], underflows: &mut usize) -> T {
    if !best.is_finite() {
        *underflows += 1;
        return T::of(LN_FLOOR);
    }
    let total: T = sums.iter().map(|&s| (s - best).exp()).sum();
    let v = best + total.ln();
    if v.is_finite() && v > T::of(LN_FLOOR) {
        v
    } else {
        *underflows += 1;
        T::of(LN_FLOOR)
    }
}

/// Per-subject marginal log-likelihood contributions of the mixed model.
pub fn per_subject_mixed_loglik<T: Real>(
    data: &LongitudinalDataset<T>,
    spec: &MixedSpec<T>,
    params: &MixedParams<T>,
) -> Result<Vec<T>> {
    spec.validate()?;
    params.marginal.validate(data.response_kind)?;
    if params.var_b.len() != spec.n_random as usize {
        return Err(Error::Domain(format!(
            "expected {} random-effect variances, got {}",
            spec.n_random,
            params.var_b.len()
        )));
    }
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // also rejects NaN
    if params.var_b.iter().any(|&v| !(v > T::zero())) {
        return Err(Error::Domain(
            "random-effect variances must be positive".into(),
        ));
    }
    let (nodes, weights) = hermite::<T>(spec.quad_points);
    let ln_w: Vec<T> = weights.iter().map(|&w| w.ln()).collect();
    let mut underflows = 0usize;
    Ok(data
        .subjects
        .iter()
        .map(|s| {
            subject_mixed_loglik(
                data.response_kind,
                spec,
                params,
                s,
                &nodes,
                &ln_w,
                &mut underflows,
            )
        })
        .collect())
}

/// Marginal log-likelihood of the mixed model by Gauss-Hermite quadrature.
pub fn mixed_loglik<T: Real>(
    data: &LongitudinalDataset<T>,
    spec: &MixedSpec<T>,
    params: &MixedParams<T>,
) -> Result<T> {
    Ok(per_subject_mixed_loglik(data, spec, params)?
        .into_iter()
        .sum())
}

fn pack_mixed_natural<T: Real>(params: &MixedParams<T>) -> Vec<T> {
    let mut v = crate::marginals::pack_natural(&params.marginal);
    v.extend_from_slice(&params.var_b);
    v
}

fn unpack_mixed_natural<T: Real>(
    kind: ResponseKind,
    n_beta: usize,
    n_random: usize,
    v: &[T],
) -> MixedParams<T> {
    let split = v.len() - n_random;
    MixedParams {
        marginal: crate::marginals::unpack_natural(kind, n_beta, &v[..split]),
        var_b: v[split..].to_vec(),
    }
}

/// Parameter names for reports: marginal block then `vb0(, vb1)`.
pub fn mixed_param_names(kind: ResponseKind, n_beta: usize, n_random: usize) -> Vec<String> {
    let mut names = param_names(kind, n_beta);
    names.extend((0..n_random).map(|i| format!("vb{i}")));
    names
}

/// Fits the mixed model by maximum marginal likelihood; variances are
/// optimized on the log scale, standard errors come from the inverse
/// numerical Hessian on the natural scale, and AIC/BIC count every
/// estimated parameter.
pub fn fit_mixed<T: Real>(
    data: &LongitudinalDataset<T>,
    spec: &MixedSpec<T>,
    init: Option<MixedParams<T>>,
) -> Result<MixedFit<T>> {
    spec.validate()?;
    let kind = data.response_kind;
    let init = match init {
        Some(p) => p,
        None => {
            // stage-1 style start plus a modest variance
            let marginal = crate::marginals::fit_marginal(data, None)?.params();
            MixedParams {
                marginal,
                var_b: vec![T::of(0.5); spec.n_random as usize],
            }
        }
    };
    init.marginal.validate(kind)?;
    let n_beta = init.marginal.beta.len();
    let n_random = spec.n_random as usize;

    // unconstrained vector: marginal transform ++ log variances
    let to_x = |p: &MixedParams<T>| -> Vec<T> {
        let mut x = crate::marginals::to_unconstrained(kind, &p.marginal);
        x.extend(p.var_b.iter().map(|v| v.ln()));
        x
    };
    let from_x = |x: &[T]| -> MixedParams<T> {
        let split = x.len() - n_random;
        MixedParams {
            marginal: crate::marginals::from_unconstrained(kind, n_beta, &x[..split]),
            var_b: x[split..].iter().map(|v| v.exp()).collect(),
        }
    };

    let (nodes, weights) = hermite::<T>(spec.quad_points);
    let ln_w: Vec<T> = weights.iter().map(|&w| w.ln()).collect();
    let mut underflow_total = 0usize;
    let mut objective = |x: &[T]| -> T {
        let params = from_x(x);
        let mut underflows = 0usize;
        let total: T = data
            .subjects
            .iter()
            .map(|s| subject_mixed_loglik(kind, spec, &params, s, &nodes, &ln_w, &mut underflows))
            .sum();
        underflow_total += underflows;
        -total
    };
    let x0 = to_x(&init);
    let out = optim::minimize(&NelderMead::default(), &mut objective, &x0);
    let params = from_x(&out.x);
    let loglik = -out.fval;
    if !out.converged || !loglik.is_finite() {
        return Err(Error::NonConvergence {
            what: "mixed-model fit exhausted its iteration budget".into(),
            best: pack_mixed_natural(&params)
                .iter()
                .map(|v| v.to_f64().unwrap_or(f64::NAN))
                .collect(),
            objective: loglik.to_f64().unwrap_or(f64::NAN),
        });
    }

    let natural = pack_mixed_natural(&params);
    let mut nat_loglik = |v: &[T]| -> T {
        let p = unpack_mixed_natural(kind, n_beta, n_random, v);
        #[allow(clippy::neg_cmp_op_on_partial_ord)] // also rejects NaN
        if p.var_b.iter().any(|&w| !(w > T::zero())) {
            return T::of(LN_FLOOR) * T::of(data.n_subjects() as f64);
        }
        if let Some(d) = p.marginal.dispersion {
            if d <= T::zero() {
                return T::of(LN_FLOOR) * T::of(data.n_subjects() as f64);
            }
        }
        let mut u = 0usize;
        data.subjects
            .iter()
            .map(|s| subject_mixed_loglik(kind, spec, &p, s, &nodes, &ln_w, &mut u))
            .sum()
    };
    let hess = optim::hessian(&mut nat_loglik, &natural, T::of(1e-4));
    let se = optim::se_from_neg_hessian(&hess, "mixed Hessian")
        .unwrap_or_else(|_| vec![T::nan(); natural.len()]);

    let dim = params.dim();
    let (aic, bic) = crate::factor_model::aic_bic(loglik, dim, data.n_subjects());
    let mut warnings = Vec::new();
    if underflow_total > 0 {
        warnings.push(format!(
            "{underflow_total} subject integrals hit the underflow floor during optimization"
        ));
    }
    Ok(MixedFit {
        spec: *spec,
        family: kind,
        params,
        se,
        loglik,
        aic,
        bic,
        dim,
        converged: out.converged,
        warnings,
    })
}

// ---------------------------------------------------------------------------
// simulation from the mixed models
// ---------------------------------------------------------------------------

/// Design of a random-effect data generator: same structural draws (visit
/// pruning, covariates, response uniforms) as the factor-copula simulator,
/// with the latent stream feeding the normal random effects instead.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixedSimDesign<T> {
    pub m: usize,
    pub d: usize,
    pub prune_p: f64,
    pub response: ResponseKind,
    pub marginal: MarginalParams<T>,
    /// True random-effect variances; the length sets RI vs RIS.
    pub var_b: Vec<T>,
    pub slope_scale: T,
    pub seed: u64,
}

/// Simulates a dataset from the RI/RIS model. With all variances zero the
/// responses coincide with an independent GLM simulation driven by the
/// same structural uniform stream.
pub fn simulate_mixed<T: Real>(design: &MixedSimDesign<T>) -> Result<LongitudinalDataset<T>> {
    design.marginal.validate(design.response)?;
    if design.var_b.is_empty() || design.var_b.len() > 2 {
        return Err(Error::Domain("var_b must have length 1 or 2".into()));
    }
    if design.var_b.iter().any(|&v| v < T::zero()) {
        return Err(Error::Domain(
            "random-effect variances must be nonnegative".into(),
        ));
    }
    let kind = design.response;
    let spec = MixedSpec {
        n_random: design.var_b.len() as u8,
        slope_scale: design.slope_scale,
        quad_points: 15,
    };
    let mut subjects = Vec::with_capacity(design.m);
    for i in 0..design.m {
        let (mut structural, mut latent) = crate::simulator::subject_streams(design.seed, i as u64);
        let draw = crate::simulator::draw_structure::<T>(&mut structural, design.d, design.prune_p);
        let b: Vec<T> = design
            .var_b
            .iter()
            .map(|&v| {
                v.sqrt()
                    * crate::special::norm_quantile(crate::simulator::unit_open::<T>(&mut latent))
            })
            .collect();
        let observations = draw
            .w
            .iter()
            .enumerate()
            .map(|(j, &wj)| {
                let t = T::of((j + 1) as f64);
                let covariates = crate::simulator::covariate_row(kind, draw.x1, draw.x2, t);
                let (d0, d1) = design_row(&spec, t);
                let mut eta: T = covariates
                    .iter()
                    .zip(&design.marginal.beta)
                    .map(|(&x, &bb)| x * bb)
                    .sum();
                eta += d0 * b[0];
                if b.len() == 2 {
                    eta += d1 * b[1];
                }
                Observation {
                    time: t,
                    y: crate::simulator::response_from_uniform(kind, &design.marginal, eta, wj),
                    covariates,
                }
            })
            .collect();
        subjects.push(Subject {
            id: format!("S{:04}", i + 1),
            observations,
        });
    }
    LongitudinalDataset::new(
        subjects,
        kind,
        crate::simulator::covariate_names(kind),
        kind.has_intercept(),
    )
}
