//! Data generation from factor-copula models and the Monte Carlo study
//! harness.
//!
//! # Randomness layout
//!
//! Everything is driven by ChaCha12, a counter-based generator with 2^64
//! independent streams. Subject `i` of a replication owns two streams:
//! stream `2i` carries the structural draws (visit count, covariates,
//! per-observation uniforms) and stream `2i + 1` the latent draws
//! (factor uniforms or random effects). Replication `r` of a study reseeds
//! with `seed + r`. The same seed therefore reproduces a dataset bit for
//! bit, independent of thread count, and altering the latent structure
//! (say 1-factor to 2-factor) leaves the structural draws untouched.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bicopula::{hinv, BicopFamily, BicopParam};
use crate::dataset::{LongitudinalDataset, Observation, ResponseKind, Subject};
use crate::error::{Error, Result};
use crate::factor_model::{fit_factor, godambe_se, FactorCopulaSpec, ObsKind};
use crate::marginals::{fit_marginal, param_names, pit, MarginalParams};
use crate::mixed::{fit_mixed, simulate_mixed, MixedSimDesign, MixedSpec};
use crate::quadrature::{make_quadrature, QuadMode, QuadratureRule};
use crate::real::Real;
use crate::special::{gamma_quantile_std, norm_quantile};

/// Uniform draw strictly inside (0, 1) with 53-bit resolution.
pub(crate) fn unit_open<T: Real>(rng: &mut ChaCha12Rng) -> T {
    T::of(((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0))
}

/// Stream handles for one subject.
pub(crate) fn subject_streams(seed: u64, subject: u64) -> (ChaCha12Rng, ChaCha12Rng) {
    let mut structural = ChaCha12Rng::seed_from_u64(seed);
    structural.set_stream(2 * subject);
    let mut latent = ChaCha12Rng::seed_from_u64(seed);
    latent.set_stream(2 * subject + 1);
    (structural, latent)
}

/// Structural draws shared by the factor and mixed generators: visit
/// count `n_i ~ Binomial(d, p)` resampled until positive, subject-level
/// covariates `x1 ~ Bernoulli(1/2)` and `x2 ~ Uniform(3, 8)`, and the
/// per-observation response uniforms.
pub(crate) struct SubjectDraw<T> {
    pub x1: T,
    pub x2: T,
    pub w: Vec<T>,
}

pub(crate) fn draw_structure<T: Real>(
    rng: &mut ChaCha12Rng,
    d: usize,
    prune_p: f64,
) -> SubjectDraw<T> {
    let p = T::of(prune_p);
    let mut n = 0usize;
    while n == 0 {
        n = (0..d).filter(|_| unit_open::<T>(rng) < p).count();
    }
    let x1 = if unit_open::<T>(rng) < T::half() {
        T::one()
    } else {
        T::zero()
    };
    let x2 = T::of(3.0) + T::of(5.0) * unit_open::<T>(rng);
    let w = (0..n).map(|_| unit_open::<T>(rng)).collect();
    SubjectDraw { x1, x2, w }
}

/// Dependence truth of a generating factor copula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CopulaTruth<T> {
    pub family: BicopFamily,
    pub rho1: T,
    pub rho2: Option<T>,
    pub nu: Option<T>,
}

impl<T: Real> CopulaTruth<T> {
    pub fn n_factors(&self) -> u8 {
        if self.rho2.is_some() {
            2
        } else {
            1
        }
    }

    fn link_param(&self, rho: T) -> BicopParam<T> {
        BicopParam {
            family: self.family,
            rho,
            nu: self.nu,
        }
    }
}

/// Complete simulation design for one data-generating configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimDesign<T> {
    pub m: usize,
    /// Maximum number of visits per subject.
    pub d: usize,
    /// Visit retention probability of the Binomial pruning.
    pub prune_p: f64,
    pub response: ResponseKind,
    pub marginal: MarginalParams<T>,
    pub copula: CopulaTruth<T>,
    pub seed: u64,
}

impl<T: Real> SimDesign<T> {
    /// Names of all recovered parameters (stage 1 then dependence).
    pub fn all_param_names(&self) -> Vec<String> {
        let mut names = param_names(self.response, self.marginal.beta.len());
        names.push("rho1".into());
        if self.copula.rho2.is_some() {
            names.push("rho2".into());
        }
        names
    }

    /// True values aligned with [`Self::all_param_names`].
    pub fn truth(&self) -> Vec<f64> {
        let mut v: Vec<f64> = crate::marginals::pack_natural(&self.marginal)
            .iter()
            .map(|x| x.to_f64().unwrap_or(f64::NAN))
            .collect();
        v.push(self.copula.rho1.to_f64().unwrap_or(f64::NAN));
        if let Some(r2) = self.copula.rho2 {
            v.push(r2.to_f64().unwrap_or(f64::NAN));
        }
        v
    }
}

/// Draws `n` uniforms from the factor copula: `v` factors first, then each
/// coordinate is the inverse h-transform of an independent uniform. A
/// Gaussian link with zero correlation passes the uniform through exactly.
pub fn sample_factor_uniforms<T: Real>(
    n: usize,
    truth: &CopulaTruth<T>,
    latent_rng: &mut ChaCha12Rng,
    w: &[T],
) -> Result<Vec<T>> {
    debug_assert_eq!(w.len(), n);
    let v1 = unit_open::<T>(latent_rng);
    let v2 = if truth.n_factors() == 2 {
        Some(unit_open::<T>(latent_rng))
    } else {
        None
    };
    let skip1 = truth.family == BicopFamily::Gaussian && truth.rho1 == T::zero();
    let p1 = truth.link_param(truth.rho1);
    let p2 = truth.rho2.map(|r| truth.link_param(r));
    w.iter()
        .map(|&wj| {
            let inner = match (&p2, v2) {
                (Some(p2), Some(v2)) => {
                    if truth.family == BicopFamily::Gaussian && p2.rho == T::zero() {
                        wj
                    } else {
                        hinv(wj, v2, p2)?
                    }
                }
                _ => wj,
            };
            if skip1 {
                Ok(inner)
            } else {
                hinv(inner, v1, &p1)
            }
        })
        .collect()
}

/// Inverse-CDF response generation shared with the mixed simulator.
pub(crate) fn response_from_uniform<T: Real>(
    kind: ResponseKind,
    params: &MarginalParams<T>,
    eta: T,
    u: T,
) -> T {
    match kind {
        ResponseKind::GammaLog => {
            let kappa = params.dispersion.expect("validated");
            let mu = eta.exp();
            mu / kappa * gamma_quantile_std(kappa, u)
        }
        ResponseKind::NormalIdentity => {
            let phi = params.dispersion.expect("validated");
            eta + phi.sqrt() * norm_quantile(u)
        }
        ResponseKind::BinaryProbit => {
            // y = 1 iff z = eta + Phi^-1(u) exceeds the zero threshold
            if norm_quantile(u) + eta > T::zero() {
                T::one()
            } else {
                T::zero()
            }
        }
        ResponseKind::OrdinalProbit { k } => {
            let th = params.thresholds.as_ref().expect("validated");
            let z = norm_quantile(u) + eta;
            let mut cat = k;
            for (i, &g) in th.iter().enumerate() {
                if z < g {
                    cat = i + 1;
                    break;
                }
            }
            T::of(cat as f64)
        }
    }
}

pub(crate) fn covariate_row<T: Real>(kind: ResponseKind, x1: T, x2: T, t: T) -> Vec<T> {
    if kind.has_intercept() {
        vec![T::one(), x1, x2, t]
    } else {
        vec![x1, x2, t]
    }
}

pub(crate) fn covariate_names(kind: ResponseKind) -> Vec<String> {
    if kind.has_intercept() {
        vec!["intercept".into(), "x1".into(), "x2".into(), "t".into()]
    } else {
        vec!["x1".into(), "x2".into(), "t".into()]
    }
}

/// Generates one dataset from a factor-copula design.
pub fn generate_dataset<T: Real>(design: &SimDesign<T>) -> Result<LongitudinalDataset<T>> {
    design.marginal.validate(design.response)?;
    let kind = design.response;
    let mut subjects = Vec::with_capacity(design.m);
    for i in 0..design.m {
        let (mut structural, mut latent) = subject_streams(design.seed, i as u64);
        let draw = draw_structure::<T>(&mut structural, design.d, design.prune_p);
        let u = sample_factor_uniforms(draw.w.len(), &design.copula, &mut latent, &draw.w)?;
        let observations = u
            .iter()
            .enumerate()
            .map(|(j, &uij)| {
                let t = T::of((j + 1) as f64);
                let covariates = covariate_row(kind, draw.x1, draw.x2, t);
                let eta = covariates
                    .iter()
                    .zip(&design.marginal.beta)
                    .map(|(&x, &b)| x * b)
                    .sum();
                Observation {
                    time: t,
                    y: response_from_uniform(kind, &design.marginal, eta, uij),
                    covariates,
                }
            })
            .collect();
        subjects.push(Subject {
            id: format!("S{:04}", i + 1),
            observations,
        });
    }
    LongitudinalDataset::new(subjects, kind, covariate_names(kind), kind.has_intercept())
}

// ---------------------------------------------------------------------------
// Monte Carlo estimation study
// ---------------------------------------------------------------------------

/// One replication's parameter estimates and standard errors (natural
/// scale, stage-1 block then dependence block).
#[derive(Debug, Clone)]
pub struct RepEstimate {
    pub estimates: Vec<f64>,
    pub ses: Vec<f64>,
}

/// One row of a Monte Carlo report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McRow {
    pub name: String,
    pub truth: f64,
    pub mean: f64,
    pub bias: f64,
    pub sd: f64,
    pub mean_se: f64,
    pub rmse: f64,
}

/// Per-parameter Monte Carlo summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McReport {
    pub rows: Vec<McRow>,
    pub n_requested: usize,
    pub n_used: usize,
    pub n_failed: usize,
}

impl McReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("parameter,true,mean,bias,sd,se,rmse\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.name, r.truth, r.mean, r.bias, r.sd, r.mean_se, r.rmse
            ));
        }
        out
    }

    /// Text table with the simulation studies' 4-decimal layout.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{:<10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}\n",
            "Parameter", "True", "Mean", "Bias", "SD", "SE", "RMSE"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<10} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4}\n",
                r.name, r.truth, r.mean, r.bias, r.sd, r.mean_se, r.rmse
            ));
        }
        out.push_str(&format!(
            "replications: {} used, {} failed of {}\n",
            self.n_used, self.n_failed, self.n_requested
        ));
        out
    }
}

/// Runs `n_reps` replications of generate-then-fit and summarizes the
/// estimates. Replication `r` reseeds the design with `seed + r`; rows are
/// deterministic for a given seed regardless of the rayon worker count.
/// Failed replications are dropped and counted.
pub fn mc_study<T, F>(design: &SimDesign<T>, fitter: F, n_reps: usize) -> Result<McReport>
where
    T: Real,
    F: Fn(&LongitudinalDataset<T>, u64) -> Result<RepEstimate> + Sync,
{
    if n_reps < 2 {
        return Err(Error::Domain("N >= 2 required".into()));
    }
    let names = design.all_param_names();
    let truth = design.truth();
    let outcomes: Vec<Result<RepEstimate>> = (0..n_reps)
        .into_par_iter()
        .map(|r| {
            let mut d = design.clone();
            d.seed = design.seed + r as u64;
            let data = generate_dataset(&d)?;
            fitter(&data, d.seed)
        })
        .collect();
    summarize_reps(&names, &truth, outcomes, n_reps)
}

fn summarize_reps(
    names: &[String],
    truth: &[f64],
    outcomes: Vec<Result<RepEstimate>>,
    n_requested: usize,
) -> Result<McReport> {
    let ok: Vec<RepEstimate> = outcomes.into_iter().filter_map(|o| o.ok()).collect();
    let n = ok.len();
    if n < 2 {
        return Err(Error::Domain(format!(
            "only {n} of {n_requested} replications succeeded; nothing to summarize"
        )));
    }
    let p = names.len();
    let mut rows = Vec::with_capacity(p);
    for k in 0..p {
        let ests: Vec<f64> = ok.iter().map(|r| r.estimates[k]).collect();
        let ses: Vec<f64> = ok.iter().map(|r| r.ses[k]).collect();
        let mean = ests.iter().sum::<f64>() / n as f64;
        let bias = mean - truth[k];
        let var = ests.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let rmse = (ests.iter().map(|e| (e - truth[k]).powi(2)).sum::<f64>() / n as f64).sqrt();
        let finite_ses: Vec<f64> = ses.iter().copied().filter(|s| s.is_finite()).collect();
        let mean_se = if finite_ses.is_empty() {
            f64::NAN
        } else {
            finite_ses.iter().sum::<f64>() / finite_ses.len() as f64
        };
        rows.push(McRow {
            name: names[k].clone(),
            truth: truth[k],
            mean,
            bias,
            sd: var.sqrt(),
            mean_se,
            rmse,
        });
    }
    Ok(McReport {
        rows,
        n_requested,
        n_used: n,
        n_failed: n_requested - n,
    })
}

/// The production two-stage fitter: stage-1 marginal fit, PIT, stage-2
/// dependence fit, Godambe standard errors for the whole stack.
pub fn two_stage_recipe<T: Real>(
    spec: FactorCopulaSpec,
    nu_grid: Vec<u32>,
    quad: (QuadMode, usize),
) -> impl Fn(&LongitudinalDataset<T>, u64) -> Result<RepEstimate> + Sync {
    move |data, _seed| {
        let rule: QuadratureRule<T> = make_quadrature(quad.0, quad.1)?;
        let marginal = fit_marginal(data, None)?;
        let pits = pit(data, &marginal.params())?;
        let factor = fit_factor(
            &pits,
            spec,
            &rule,
            &nu_grid,
            ObsKind::from(data.response_kind),
            marginal.loglik,
            marginal.dim(),
        )?;
        let godambe = godambe_se(data, &marginal, &factor, &rule)?;
        let mut estimates: Vec<f64> = crate::marginals::pack_natural(&marginal.params())
            .iter()
            .map(|v| v.to_f64().unwrap_or(f64::NAN))
            .collect();
        estimates.push(factor.rho1.to_f64().unwrap_or(f64::NAN));
        if let Some(r2) = factor.rho2 {
            estimates.push(r2.to_f64().unwrap_or(f64::NAN));
        }
        let ses = godambe
            .se
            .iter()
            .map(|v| v.to_f64().unwrap_or(f64::NAN))
            .collect();
        Ok(RepEstimate { estimates, ses })
    }
}

// ---------------------------------------------------------------------------
// model-comparison study (PCI)
// ---------------------------------------------------------------------------

/// A data-generating process for the comparison study.
#[derive(Debug, Clone)]
pub enum GeneratorSpec<T> {
    Factor(SimDesign<T>),
    Mixed(MixedSimDesign<T>),
}

impl<T: Real> GeneratorSpec<T> {
    fn generate(&self, seed_offset: u64) -> Result<LongitudinalDataset<T>> {
        match self {
            GeneratorSpec::Factor(d) => {
                let mut d = d.clone();
                d.seed += seed_offset;
                generate_dataset(&d)
            }
            GeneratorSpec::Mixed(d) => {
                let mut d = d.clone();
                d.seed += seed_offset;
                simulate_mixed(&d)
            }
        }
    }
}

/// A candidate model fitted to every generated dataset.
#[derive(Debug, Clone)]
pub struct CandidateSpec {
    pub name: String,
    pub kind: CandidateKind,
}

#[derive(Debug, Clone)]
pub enum CandidateKind {
    Mixed {
        n_random: u8,
        slope_scale: f64,
    },
    Factor {
        family: BicopFamily,
        n_factors: u8,
        nu_grid: Vec<u32>,
    },
}

impl CandidateSpec {
    pub fn ri() -> Self {
        CandidateSpec {
            name: "ri".into(),
            kind: CandidateKind::Mixed {
                n_random: 1,
                slope_scale: 1.0,
            },
        }
    }

    pub fn ris(slope_scale: f64) -> Self {
        CandidateSpec {
            name: "ris".into(),
            kind: CandidateKind::Mixed {
                n_random: 2,
                slope_scale,
            },
        }
    }

    pub fn gaussian_factor(n_factors: u8) -> Self {
        CandidateSpec {
            name: format!("gaussian_{n_factors}f"),
            kind: CandidateKind::Factor {
                family: BicopFamily::Gaussian,
                n_factors,
                nu_grid: vec![],
            },
        }
    }

    pub fn t_factor(n_factors: u8, nu_grid: Vec<u32>) -> Self {
        CandidateSpec {
            name: format!("student_t_{n_factors}f"),
            kind: CandidateKind::Factor {
                family: BicopFamily::StudentT,
                n_factors,
                nu_grid,
            },
        }
    }

    /// Fits the candidate and returns (aic, bic, dim).
    fn fit<T: Real>(
        &self,
        data: &LongitudinalDataset<T>,
        quad: (QuadMode, usize),
    ) -> Result<(f64, f64, usize)> {
        match &self.kind {
            CandidateKind::Mixed {
                n_random,
                slope_scale,
            } => {
                let spec = MixedSpec {
                    n_random: *n_random,
                    slope_scale: T::of(*slope_scale),
                    quad_points: quad.1,
                };
                let fit = fit_mixed(data, &spec, None)?;
                Ok((
                    fit.aic.to_f64().unwrap_or(f64::NAN),
                    fit.bic.to_f64().unwrap_or(f64::NAN),
                    fit.dim,
                ))
            }
            CandidateKind::Factor {
                family,
                n_factors,
                nu_grid,
            } => {
                let rule: QuadratureRule<T> = make_quadrature(quad.0, quad.1)?;
                let marginal = fit_marginal(data, None)?;
                let pits = pit(data, &marginal.params())?;
                let grid = if *family == BicopFamily::StudentT && nu_grid.is_empty() {
                    vec![4u32]
                } else {
                    nu_grid.clone()
                };
                let fit = fit_factor(
                    &pits,
                    FactorCopulaSpec::new(*n_factors, *family),
                    &rule,
                    &grid,
                    ObsKind::from(data.response_kind),
                    marginal.loglik,
                    marginal.dim(),
                )?;
                Ok((
                    fit.aic.to_f64().unwrap_or(f64::NAN),
                    fit.bic.to_f64().unwrap_or(f64::NAN),
                    fit.dim,
                ))
            }
        }
    }
}

/// Comparison-study result for one generator row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PciRow {
    pub generator: String,
    /// Index into the candidate list of the generator's true class.
    pub true_candidate: String,
    pub mean_aic: Vec<f64>,
    pub mean_bic: Vec<f64>,
    pub pci_aic: f64,
    pub pci_bic: f64,
    pub n_used: usize,
    pub n_failed: usize,
}

/// Proportion-of-correct-identification table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PciReport {
    pub candidates: Vec<String>,
    pub rows: Vec<PciRow>,
    pub n_requested: usize,
}

impl PciReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("generator,true_candidate");
        for c in &self.candidates {
            out.push_str(&format!(",aic_{c},bic_{c}"));
        }
        out.push_str(",pci_aic,pci_bic,used,failed\n");
        for r in &self.rows {
            out.push_str(&format!("{},{}", r.generator, r.true_candidate));
            for k in 0..self.candidates.len() {
                out.push_str(&format!(",{},{}", r.mean_aic[k], r.mean_bic[k]));
            }
            out.push_str(&format!(
                ",{},{},{},{}\n",
                r.pci_aic, r.pci_bic, r.n_used, r.n_failed
            ));
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            out.push_str(&format!(
                "generated: {} (true class {})\n",
                r.generator, r.true_candidate
            ));
            out.push_str(&format!(
                "  {:<16} {:>12} {:>12}\n",
                "fitted", "mean AIC", "mean BIC"
            ));
            for (k, c) in self.candidates.iter().enumerate() {
                out.push_str(&format!(
                    "  {:<16} {:>12.2} {:>12.2}\n",
                    c, r.mean_aic[k], r.mean_bic[k]
                ));
            }
            out.push_str(&format!(
                "  PCI {:.4} (AIC) / {:.4} (BIC), {} used, {} failed\n",
                r.pci_aic, r.pci_bic, r.n_used, r.n_failed
            ));
        }
        out
    }
}

/// Smallest-AIC winner with the documented tie-break: value, then fewer
/// parameters, then lexicographic candidate name.
pub fn select_winner(entries: &[(String, f64, usize)]) -> usize {
    let mut best = 0usize;
    for i in 1..entries.len() {
        let (bn, bv, bd) = &entries[best];
        let (n, v, d) = &entries[i];
        let better = if (v - bv).abs() <= 1e-9 {
            match d.cmp(bd) {
                std::cmp::Ordering::Less => true,
                std::cmp::Ordering::Greater => false,
                std::cmp::Ordering::Equal => n < bn,
            }
        } else {
            v < bv
        };
        if better {
            best = i;
        }
    }
    best
}

/// Fits every candidate to data from every generator over `n_reps`
/// replications and reports the proportion of correct identification by
/// minimal AIC and BIC.
pub fn model_comparison_study<T: Real>(
    generators: &[(String, GeneratorSpec<T>)],
    candidates: &[CandidateSpec],
    n_reps: usize,
    quad: (QuadMode, usize),
) -> Result<PciReport> {
    if n_reps < 2 {
        return Err(Error::Domain("N >= 2 required".into()));
    }
    let candidate_names: Vec<String> = candidates.iter().map(|c| c.name.clone()).collect();
    let mut rows = Vec::with_capacity(generators.len());
    for (gen_name, generator) in generators {
        if !candidate_names.contains(gen_name) {
            return Err(Error::Domain(format!(
                "generator {gen_name} has no matching candidate in the fit set"
            )));
        }
        type CandidateFits = Vec<(f64, f64, usize)>;
        let reps: Vec<Result<CandidateFits>> = (0..n_reps)
            .into_par_iter()
            .map(|r| {
                let data = generator.generate(r as u64)?;
                let fits: Result<CandidateFits> =
                    candidates.iter().map(|c| c.fit(&data, quad)).collect();
                fits
            })
            .collect();
        let ok: Vec<CandidateFits> = reps
            .into_iter()
            .filter_map(|r| r.ok())
            .collect();
        let n_used = ok.len();
        if n_used < 2 {
            return Err(Error::Domain(format!(
                "generator {gen_name}: only {n_used} replications succeeded"
            )));
        }
        let k = candidates.len();
        let mut mean_aic = vec![0.0; k];
        let mut mean_bic = vec![0.0; k];
        let mut wins_aic = 0usize;
        let mut wins_bic = 0usize;
        for fits in &ok {
            let aic_entries: Vec<(String, f64, usize)> = fits
                .iter()
                .zip(&candidate_names)
                .map(|(&(aic, _, dim), n)| (n.clone(), aic, dim))
                .collect();
            let bic_entries: Vec<(String, f64, usize)> = fits
                .iter()
                .zip(&candidate_names)
                .map(|(&(_, bic, dim), n)| (n.clone(), bic, dim))
                .collect();
            if candidate_names[select_winner(&aic_entries)] == *gen_name {
                wins_aic += 1;
            }
            if candidate_names[select_winner(&bic_entries)] == *gen_name {
                wins_bic += 1;
            }
            for i in 0..k {
                mean_aic[i] += fits[i].0 / n_used as f64;
                mean_bic[i] += fits[i].1 / n_used as f64;
            }
        }
        rows.push(PciRow {
            generator: gen_name.clone(),
            true_candidate: gen_name.clone(),
            mean_aic,
            mean_bic,
            pci_aic: wins_aic as f64 / n_used as f64,
            pci_bic: wins_bic as f64 / n_used as f64,
            n_used,
            n_failed: n_reps - n_used,
        });
    }
    Ok(PciReport {
        candidates: candidate_names,
        rows,
        n_requested: n_reps,
    })
}

// ---------------------------------------------------------------------------
// presets mirroring the simulation studies
// ---------------------------------------------------------------------------

/// Named designs of the coefficient-recovery study. Recognized names are
/// `{gamma,normal,binary,ordinal}-{1f,2f}-{gauss,t}`.
pub fn sim_preset<T: Real>(name: &str, m: usize, seed: u64) -> Option<SimDesign<T>> {
    let parts: Vec<&str> = name.split('-').collect();
    if parts.len() != 3 {
        return None;
    }
    let (response, marginal) = preset_marginal::<T>(parts[0])?;
    let two_factor = match parts[1] {
        "1f" => false,
        "2f" => true,
        _ => return None,
    };
    let (family, nu) = match parts[2] {
        "gauss" => (BicopFamily::Gaussian, None),
        "t" => (BicopFamily::StudentT, Some(T::of(4.0))),
        _ => return None,
    };
    Some(SimDesign {
        m,
        d: 10,
        prune_p: 0.8,
        response,
        marginal,
        copula: CopulaTruth {
            family,
            rho1: T::half(),
            rho2: two_factor.then(T::half),
            nu,
        },
        seed,
    })
}

/// Marginal truth per response family in the simulation studies.
pub fn preset_marginal<T: Real>(family: &str) -> Option<(ResponseKind, MarginalParams<T>)> {
    let b = |v: f64| T::of(v);
    match family {
        "gamma" => Some((
            ResponseKind::GammaLog,
            MarginalParams::continuous(vec![b(1.0), b(-0.5), b(0.2), b(0.2)], b(3.0)),
        )),
        "normal" => Some((
            ResponseKind::NormalIdentity,
            MarginalParams::continuous(vec![b(1.0), b(-0.5), b(0.2), b(0.2)], b(1.0)),
        )),
        "binary" => Some((
            ResponseKind::BinaryProbit,
            MarginalParams::binary(vec![b(-0.5), b(-0.5), b(0.2), b(0.2)]),
        )),
        "ordinal" => Some((
            ResponseKind::OrdinalProbit { k: 4 },
            MarginalParams::ordinal(vec![b(-0.5), b(0.2), b(0.2)], vec![b(-1.0), b(1.0), b(3.0)]),
        )),
        _ => None,
    }
}

/// Named generators plus the candidate fit set of a comparison study.
pub type ComparisonGrid<T> = (Vec<(String, GeneratorSpec<T>)>, Vec<CandidateSpec>);

/// Generator/candidate grid of the comparison study for one marginal
/// family: random-effect baseline vs Gaussian vs Student-t(4) factor
/// copulas, either the 1-factor/RI or the 2-factor/RIS flavor.
pub fn comparison_preset<T: Real>(
    family: &str,
    two_factor: bool,
    m: usize,
    seed: u64,
) -> Option<ComparisonGrid<T>> {
    let (response, marginal) = preset_marginal::<T>(family)?;
    let factor_design = |fam: BicopFamily, nu: Option<T>, seed: u64| SimDesign {
        m,
        d: 10,
        prune_p: 0.8,
        response,
        marginal: marginal.clone(),
        copula: CopulaTruth {
            family: fam,
            rho1: T::half(),
            rho2: two_factor.then(T::half),
            nu,
        },
        seed,
    };
    let n_random = if two_factor { 2 } else { 1 };
    let slope_scale = 0.1;
    let mixed_design = MixedSimDesign {
        m,
        d: 10,
        prune_p: 0.8,
        response,
        marginal: marginal.clone(),
        var_b: vec![T::one(); n_random as usize],
        slope_scale: T::of(slope_scale),
        seed,
    };
    let baseline = if two_factor {
        CandidateSpec::ris(slope_scale)
    } else {
        CandidateSpec::ri()
    };
    let nf = if two_factor { 2 } else { 1 };
    let generators = vec![
        (baseline.name.clone(), GeneratorSpec::Mixed(mixed_design)),
        (
            format!("gaussian_{nf}f"),
            GeneratorSpec::Factor(factor_design(BicopFamily::Gaussian, None, seed + 10_000)),
        ),
        (
            format!("student_t_{nf}f"),
            GeneratorSpec::Factor(factor_design(
                BicopFamily::StudentT,
                Some(T::of(4.0)),
                seed + 20_000,
            )),
        ),
    ];
    let candidates = vec![
        baseline,
        CandidateSpec::gaussian_factor(nf),
        CandidateSpec::t_factor(nf, vec![4]),
    ];
    Some((generators, candidates))
}
