//! Bivariate linking-copula kernels: Gaussian and Student-t densities,
//! h-functions (conditional CDFs) and their inverses.
//!
//! Public entry points work on copula data `(u1, u2)` in the unit square.
//! The factor likelihoods instead call the `*_z` kernels, which take
//! already-transformed quantiles so the expensive normal/t quantile
//! evaluations happen once per dataset rather than once per likelihood
//! evaluation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::special::{ln_gamma, norm_cdf, norm_quantile, t_cdf, t_quantile};

/// Family of the bivariate linking copula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BicopFamily {
    Gaussian,
    StudentT,
}

impl std::fmt::Display for BicopFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BicopFamily::Gaussian => write!(f, "gaussian"),
            BicopFamily::StudentT => write!(f, "student_t"),
        }
    }
}

/// Dependence parameter of a bivariate linking copula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BicopParam<T> {
    pub family: BicopFamily,
    pub rho: T,
    /// Degrees of freedom; required for the Student-t family.
    pub nu: Option<T>,
}

impl<T: Real> BicopParam<T> {
    pub fn gaussian(rho: T) -> Self {
        BicopParam {
            family: BicopFamily::Gaussian,
            rho,
            nu: None,
        }
    }

    pub fn student_t(rho: T, nu: T) -> Self {
        BicopParam {
            family: BicopFamily::StudentT,
            rho,
            nu: Some(nu),
        }
    }

    // negated form also rejects NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if !(self.rho.abs() < T::one()) {
            return Err(Error::Domain(format!(
                "correlation parameter must satisfy |rho| < 1, got {}",
                self.rho
            )));
        }
        if self.family == BicopFamily::StudentT {
            match self.nu {
                Some(nu) if nu >= T::two() => {}
                Some(nu) => {
                    return Err(Error::Domain(format!(
                        "student_t degrees of freedom must be >= 2, got {nu}"
                    )))
                }
                None => {
                    return Err(Error::Domain(
                        "student_t copula needs a degrees-of-freedom parameter".into(),
                    ))
                }
            }
        }
        Ok(())
    }
}

/// Univariate family for [`uni_cdf`] / [`uni_quantile`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UniFamily {
    Normal,
    StudentT,
}

/// Standard normal or standard t CDF.
pub fn uni_cdf<T: Real>(family: UniFamily, x: T, nu: Option<T>) -> Result<T> {
    match family {
        UniFamily::Normal => Ok(norm_cdf(x)),
        UniFamily::StudentT => {
            let nu = require_nu(nu)?;
            Ok(t_cdf(x, nu))
        }
    }
}

/// Standard normal or standard t quantile; `p` must lie strictly inside
/// the unit interval.
pub fn uni_quantile<T: Real>(family: UniFamily, p: T, nu: Option<T>) -> Result<T> {
    if !(p > T::zero() && p < T::one()) {
        return Err(Error::Domain(format!(
            "quantile argument must lie in (0,1), got {p}"
        )));
    }
    match family {
        UniFamily::Normal => Ok(norm_quantile(p)),
        UniFamily::StudentT => {
            let nu = require_nu(nu)?;
            Ok(t_quantile(p, nu))
        }
    }
}

fn require_nu<T: Real>(nu: Option<T>) -> Result<T> {
    match nu {
        Some(nu) if nu > T::zero() => Ok(nu),
        _ => Err(Error::Domain("student_t needs nu > 0".into())),
    }
}

/// Clamps a copula argument into `[eps, 1 - eps]`; the flag reports
/// whether clamping occurred.
pub fn clamp_unit<T: Real>(u: T) -> (T, bool) {
    let eps = T::pit_epsilon();
    if u < eps {
        (eps, true)
    } else if u > T::one() - eps {
        (T::one() - eps, true)
    } else {
        (u, false)
    }
}

/// Copula density at `(u1, u2)`; boundary inputs are clamped.
pub fn bicop_pdf<T: Real>(u1: T, u2: T, p: &BicopParam<T>) -> Result<T> {
    Ok(bicop_log_pdf(u1, u2, p)?.exp())
}

/// Log copula density at `(u1, u2)`.
pub fn bicop_log_pdf<T: Real>(u1: T, u2: T, p: &BicopParam<T>) -> Result<T> {
    p.validate()?;
    let (u1, _) = clamp_unit(u1);
    let (u2, _) = clamp_unit(u2);
    match p.family {
        BicopFamily::Gaussian => {
            let z1 = norm_quantile(u1);
            let z2 = norm_quantile(u2);
            Ok(gauss_ln_pdf_z(z1, z2, p.rho))
        }
        BicopFamily::StudentT => {
            let nu = require_nu(p.nu)?;
            let ctx = TCtx::new(nu);
            let x1 = t_quantile(u1, nu);
            let x2 = t_quantile(u2, nu);
            Ok(ctx.ln_pdf_z(x1, x2, p.rho))
        }
    }
}

/// h-function `C_{1|2}(u1 | u2)`: the conditional CDF of the first copula
/// argument given the second.
pub fn hfun<T: Real>(u1: T, u2: T, p: &BicopParam<T>) -> Result<T> {
    p.validate()?;
    let (u1, _) = clamp_unit(u1);
    let (u2, _) = clamp_unit(u2);
    match p.family {
        BicopFamily::Gaussian => {
            let z1 = norm_quantile(u1);
            let z2 = norm_quantile(u2);
            Ok(norm_cdf(gauss_h_arg_z(z1, z2, p.rho)))
        }
        BicopFamily::StudentT => {
            let nu = require_nu(p.nu)?;
            let ctx = TCtx::new(nu);
            let x1 = t_quantile(u1, nu);
            let x2 = t_quantile(u2, nu);
            Ok(ctx.h_z(x1, x2, p.rho))
        }
    }
}

/// Inverse h-function: the unique `u1` with `hfun(u1, u2) = w`.
pub fn hinv<T: Real>(w: T, u2: T, p: &BicopParam<T>) -> Result<T> {
    p.validate()?;
    let (w, _) = clamp_unit(w);
    let (u2, _) = clamp_unit(u2);
    match p.family {
        BicopFamily::Gaussian => {
            let zw = norm_quantile(w);
            let z2 = norm_quantile(u2);
            let s = (T::one() - p.rho * p.rho).sqrt();
            Ok(norm_cdf(zw * s + p.rho * z2))
        }
        BicopFamily::StudentT => {
            let nu = require_nu(p.nu)?;
            let x2 = t_quantile(u2, nu);
            let s = t_quantile(w, nu + T::one());
            let scale = ((nu + x2 * x2) * (T::one() - p.rho * p.rho) / (nu + T::one())).sqrt();
            Ok(t_cdf(s * scale + p.rho * x2, nu))
        }
    }
}

// ---------------------------------------------------------------------------
// quantile-space kernels used by the factor likelihoods
// ---------------------------------------------------------------------------

/// Log Gaussian copula density in normal-score space.
#[inline]
pub(crate) fn gauss_ln_pdf_z<T: Real>(z1: T, z2: T, rho: T) -> T {
    let omr2 = T::one() - rho * rho;
    -T::half() * omr2.ln()
        - (rho * rho * (z1 * z1 + z2 * z2) - T::two() * rho * z1 * z2) / (T::two() * omr2)
}

/// Argument of the normal CDF in the Gaussian h-function; this equals the
/// normal score of `h(u1|u2)`, which is what the 2-factor composition needs.
#[inline]
pub(crate) fn gauss_h_arg_z<T: Real>(z1: T, z2: T, rho: T) -> T {
    (z1 - rho * z2) / (T::one() - rho * rho).sqrt()
}

/// Per-degrees-of-freedom constants for the Student-t kernels.
#[derive(Debug, Clone, Copy)]
pub(crate) struct TCtx<T> {
    pub nu: T,
    /// lnΓ((ν+2)/2) + lnΓ(ν/2) − 2 lnΓ((ν+1)/2)
    ln_density_const: T,
}

impl<T: Real> TCtx<T> {
    pub fn new(nu: T) -> Self {
        TCtx {
            nu,
            ln_density_const: ln_gamma(T::half() * (nu + T::two())) + ln_gamma(T::half() * nu)
                - T::two() * ln_gamma(T::half() * (nu + T::one())),
        }
    }

    /// Log t-copula density in t-score space.
    #[inline]
    pub fn ln_pdf_z(&self, x1: T, x2: T, rho: T) -> T {
        let nu = self.nu;
        let omr2 = T::one() - rho * rho;
        let quad = x1 * x1 - T::two() * rho * x1 * x2 + x2 * x2;
        self.ln_density_const
            - T::half() * omr2.ln()
            - T::half() * (nu + T::two()) * (T::one() + quad / (nu * omr2)).ln()
            + T::half()
                * (nu + T::one())
                * ((T::one() + x1 * x1 / nu).ln() + (T::one() + x2 * x2 / nu).ln())
    }

    /// Argument of the `T_{ν+1}` CDF in the t h-function.
    #[inline]
    pub fn h_arg_z(&self, x1: T, x2: T, rho: T) -> T {
        let nu = self.nu;
        let scale = ((nu + x2 * x2) * (T::one() - rho * rho) / (nu + T::one())).sqrt();
        (x1 - rho * x2) / scale
    }

    /// h-function in t-score space: `T_{ν+1}(h_arg)`.
    #[inline]
    pub fn h_z(&self, x1: T, x2: T, rho: T) -> T {
        t_cdf(self.h_arg_z(x1, x2, rho), self.nu + T::one())
    }
}
