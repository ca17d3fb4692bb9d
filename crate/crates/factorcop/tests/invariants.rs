//! Cross-module properties checked against independent brute-force
//! oracles: finite-difference h-functions, bootstrap standard errors,
//! closed-form mixed-model equivalences and probability-integral
//! uniformity.

mod common;

use factorcop::bicopula::{bicop_pdf, hfun, BicopFamily, BicopParam};
use factorcop::dataset::ResponseKind;
use factorcop::factor_model::{
    fit_factor, godambe_se, per_subject_loglik_2f, FactorCopulaSpec, LinkSpec, ObsKind,
};
use factorcop::marginals::{fit_marginal, pit, MarginalParams, PitSample};
use factorcop::mixed::{fit_mixed, simulate_mixed, MixedSimDesign, MixedSpec};
use factorcop::quadrature::{make_quadrature, QuadMode};
use factorcop::simulator::{generate_dataset, sim_preset, CopulaTruth, SimDesign};
use factorcop::DatasetF64;

fn quad15() -> factorcop::QuadratureRuleF64 {
    make_quadrature(QuadMode::HermiteProbit, 15).unwrap()
}

#[test]
fn hfun_matches_finite_difference_of_cdf_oracle() {
    // dC(u1, v)/dv computed from a quadrant-integrated bivariate density;
    // fully independent of the closed-form h expressions
    for (nu, fam) in [
        (None, BicopFamily::Gaussian),
        (Some(4.0), BicopFamily::StudentT),
    ] {
        for &rho in &[-0.6, 0.3, 0.7] {
            let p = BicopParam {
                family: fam,
                rho,
                nu,
            };
            for &(u1, v) in &[(0.3, 0.7), (0.1, 0.2), (0.85, 0.45), (0.5, 0.9)] {
                let ours = hfun(u1, v, &p).unwrap();
                let oracle = common::hfun_oracle(u1, v, rho, nu);
                assert!(
                    (ours - oracle).abs() < 1e-5,
                    "{fam:?} rho={rho} ({u1},{v}): {ours} vs oracle {oracle}"
                );
            }
        }
    }
}

#[test]
fn pit_of_true_model_is_uniform() {
    // with the true marginal parameters the PIT values pass a KS test at
    // level 0.01 in at least 95% of replications
    for preset in ["gamma-1f-gauss", "normal-1f-gauss"] {
        let mut passes = 0;
        let n_reps = 20;
        for r in 0..n_reps {
            let design = sim_preset::<f64>(preset, 150, 5000 + r).unwrap();
            let data = generate_dataset(&design).unwrap();
            let pits = pit(&data, &design.marginal).unwrap();
            let mut u: Vec<f64> = pits.iter().flatten().map(|p| p.u).collect();
            assert!(u.len() >= 1000);
            u.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
            let ks = common::ks_statistic(&u);
            let critical = 1.628 / (u.len() as f64).sqrt();
            if ks < critical {
                passes += 1;
            }
        }
        assert!(
            passes * 100 >= n_reps * 95,
            "{preset}: {passes}/{n_reps} passed"
        );
    }
}

#[test]
fn godambe_se_within_bootstrap_band() {
    // nonparametric subject-resampling bootstrap of the two-stage estimate
    let design = sim_preset::<f64>("normal-1f-gauss", 200, 31).unwrap();
    let data = generate_dataset(&design).unwrap();
    let quad = quad15();
    let spec = FactorCopulaSpec::new(1, BicopFamily::Gaussian);
    let fit_rho = |d: &DatasetF64| -> f64 {
        let marginal = fit_marginal(d, None).unwrap();
        let pits = pit(d, &marginal.params()).unwrap();
        fit_factor(
            &pits,
            spec,
            &quad,
            &[],
            ObsKind::Continuous,
            marginal.loglik,
            marginal.dim(),
        )
        .unwrap()
        .rho1
    };

    let marginal = fit_marginal(&data, None).unwrap();
    let pits = pit(&data, &marginal.params()).unwrap();
    let factor = fit_factor(
        &pits,
        spec,
        &quad,
        &[],
        ObsKind::Continuous,
        marginal.loglik,
        marginal.dim(),
    )
    .unwrap();
    let godambe = godambe_se(&data, &marginal, &factor, &quad).unwrap();
    let se_rho = *godambe.se.last().unwrap();

    use rand::{RngCore, SeedableRng};
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(77);
    let m = data.n_subjects();
    let n_boot = 200;
    let mut rhos = Vec::with_capacity(n_boot);
    for _ in 0..n_boot {
        let subjects: Vec<_> = (0..m)
            .map(|_| data.subjects[(rng.next_u64() % m as u64) as usize].clone())
            .collect();
        let resampled = DatasetF64::new(
            subjects,
            data.response_kind,
            data.covariate_names.clone(),
            data.intercept_prepended,
        )
        .unwrap();
        rhos.push(fit_rho(&resampled));
    }
    let mean = rhos.iter().sum::<f64>() / n_boot as f64;
    let sd = (rhos.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n_boot as f64 - 1.0)).sqrt();
    assert!(
        (se_rho - sd).abs() <= 0.25 * sd,
        "godambe {se_rho} vs bootstrap {sd}"
    );
}

#[test]
fn normal_random_intercept_equals_gaussian_factor_in_fit() {
    // the two model classes coincide for normal margins; their maximized
    // logliks agree up to two-stage and quadrature slack
    let design = MixedSimDesign {
        m: 200,
        d: 10,
        prune_p: 0.8,
        response: ResponseKind::NormalIdentity,
        marginal: MarginalParams::continuous(vec![1.0, -0.5, 0.2, 0.2], 1.0),
        var_b: vec![1.0],
        slope_scale: 0.1,
        seed: 99,
    };
    let data = simulate_mixed(&design).unwrap();
    let ri = fit_mixed(&data, &MixedSpec::random_intercept(), None).unwrap();
    let marginal = fit_marginal(&data, None).unwrap();
    let pits = pit(&data, &marginal.params()).unwrap();
    let factor = fit_factor(
        &pits,
        FactorCopulaSpec::new(1, BicopFamily::Gaussian),
        &quad15(),
        &[],
        ObsKind::Continuous,
        marginal.loglik,
        marginal.dim(),
    )
    .unwrap();
    assert!(
        (ri.loglik - factor.loglik).abs() <= 0.5,
        "RI {} vs factor-IFM {}",
        ri.loglik,
        factor.loglik
    );
    // and the implied dependence matches: rho^2 = V / (V + phi)
    let icc = ri.params.var_b[0] / (ri.params.var_b[0] + ri.params.marginal.dispersion.unwrap());
    assert!(
        (factor.rho1.powi(2) - icc).abs() < 0.05,
        "rho^2 {} vs ICC {}",
        factor.rho1.powi(2),
        icc
    );
}

#[test]
fn mixed_simulation_intraclass_correlation() {
    // RI normal with V = phi = 1: within-subject correlation 1/2
    let design = MixedSimDesign {
        m: 2000,
        d: 10,
        prune_p: 0.8,
        response: ResponseKind::NormalIdentity,
        marginal: MarginalParams::continuous(vec![1.0, -0.5, 0.2, 0.2], 1.0),
        var_b: vec![1.0],
        slope_scale: 0.1,
        seed: 12,
    };
    let data = simulate_mixed(&design).unwrap();
    // residual pairs share the subject effect
    let mut num = 0.0;
    let mut den = 0.0;
    let mut count = 0.0;
    let mut total = 0.0;
    for s in &data.subjects {
        let resid: Vec<f64> = s
            .observations
            .iter()
            .map(|o| {
                o.y - o
                    .covariates
                    .iter()
                    .zip(&design.marginal.beta)
                    .map(|(x, b)| x * b)
                    .sum::<f64>()
            })
            .collect();
        for i in 0..resid.len() {
            den += resid[i] * resid[i];
            total += 1.0;
            for j in (i + 1)..resid.len() {
                num += resid[i] * resid[j];
                count += 1.0;
            }
        }
    }
    let icc = (num / count) / (den / total);
    assert!((icc - 0.5).abs() < 0.03, "empirical ICC = {icc}");
}

#[test]
fn ris_variance_grows_with_scaled_time() {
    // Var(Y at time t) = V0 + 0.01 t^2 V1 + phi for slope scale 0.1
    let design = MixedSimDesign {
        m: 4000,
        d: 10,
        prune_p: 1.0, // keep every visit so each time has a full cohort
        response: ResponseKind::NormalIdentity,
        marginal: MarginalParams::continuous(vec![1.0, -0.5, 0.2, 0.2], 1.0),
        var_b: vec![1.0, 1.0],
        slope_scale: 0.1,
        seed: 13,
    };
    let data = simulate_mixed(&design).unwrap();
    for t in [1usize, 5, 10] {
        let resid: Vec<f64> = data
            .subjects
            .iter()
            .map(|s| {
                let o = &s.observations[t - 1];
                o.y - o
                    .covariates
                    .iter()
                    .zip(&design.marginal.beta)
                    .map(|(x, b)| x * b)
                    .sum::<f64>()
            })
            .collect();
        let mean = resid.iter().sum::<f64>() / resid.len() as f64;
        let var = resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (resid.len() - 1) as f64;
        let expected = 1.0 + 0.01 * (t * t) as f64 + 1.0;
        assert!(
            (var - expected).abs() < 0.15 * expected,
            "t={t}: var {var} vs expected {expected}"
        );
    }
}

#[test]
fn zero_variance_mixed_equals_zero_rho_factor_exactly() {
    let marginal = MarginalParams::continuous(vec![1.0, -0.5, 0.2, 0.2], 1.0);
    let mixed = MixedSimDesign {
        m: 60,
        d: 10,
        prune_p: 0.8,
        response: ResponseKind::NormalIdentity,
        marginal: marginal.clone(),
        var_b: vec![0.0],
        slope_scale: 0.1,
        seed: 404,
    };
    let factor = SimDesign {
        m: 60,
        d: 10,
        prune_p: 0.8,
        response: ResponseKind::NormalIdentity,
        marginal,
        copula: CopulaTruth {
            family: BicopFamily::Gaussian,
            rho1: 0.0,
            rho2: None,
            nu: None,
        },
        seed: 404,
    };
    let a = simulate_mixed(&mixed).unwrap();
    let b = generate_dataset(&factor).unwrap();
    assert_eq!(a, b);
}

#[test]
fn binary_random_intercept_recovery() {
    // mean of V-hat over replications within 3 Monte Carlo standard errors
    // of the truth
    let n_reps = 12;
    let mut vs = Vec::with_capacity(n_reps);
    for r in 0..n_reps {
        let design = MixedSimDesign {
            m: 150,
            d: 10,
            prune_p: 0.8,
            response: ResponseKind::BinaryProbit,
            marginal: MarginalParams::binary(vec![-0.5, -0.5, 0.2, 0.2]),
            var_b: vec![1.0],
            slope_scale: 0.1,
            seed: 700 + r as u64,
        };
        let data = simulate_mixed(&design).unwrap();
        let fit = fit_mixed(&data, &MixedSpec::random_intercept(), None).unwrap();
        vs.push(fit.params.var_b[0]);
    }
    let mean = vs.iter().sum::<f64>() / n_reps as f64;
    let sd = (vs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_reps as f64 - 1.0)).sqrt();
    let mc_se = sd / (n_reps as f64).sqrt();
    assert!(
        (mean - 1.0).abs() <= 3.0 * mc_se,
        "mean V = {mean}, MC se = {mc_se}"
    );
}

#[test]
fn gamma_stage_one_recovery_at_m500() {
    // single m=500 dataset: estimates within 3 reported SDs of the truth
    let design = sim_preset::<f64>("gamma-1f-gauss", 500, 2024).unwrap();
    let data = generate_dataset(&design).unwrap();
    let fit = fit_marginal(&data, None).unwrap();
    let truth = [1.0, -0.5, 0.2, 0.2, 3.0];
    let sds = [0.0648, 0.0314, 0.0105, 0.0035, 0.0731];
    let est = [
        fit.beta[0],
        fit.beta[1],
        fit.beta[2],
        fit.beta[3],
        fit.dispersion.unwrap(),
    ];
    for i in 0..5 {
        assert!(
            (est[i] - truth[i]).abs() <= 3.0 * sds[i],
            "param {i}: {} vs {} (3 sd = {})",
            est[i],
            truth[i],
            3.0 * sds[i]
        );
    }
}

#[test]
fn two_factor_continuous_matches_midpoint_brute_force() {
    // per-subject 2-factor density against a 400x400 midpoint rule built
    // from the public u-space copula API
    let pits: Vec<Vec<PitSample<f64>>> = vec![
        vec![
            PitSample {
                u: 0.31,
                u_minus: 0.31,
            },
            PitSample {
                u: 0.82,
                u_minus: 0.82,
            },
        ],
        vec![
            PitSample {
                u: 0.65,
                u_minus: 0.65,
            },
            PitSample {
                u: 0.12,
                u_minus: 0.12,
            },
        ],
    ];
    let (rho1, rho2) = (0.5, 0.5);
    let quad = make_quadrature(QuadMode::HermiteProbit, 25).unwrap();
    let parts = per_subject_loglik_2f(
        &pits,
        rho1,
        rho2,
        &LinkSpec::gaussian(),
        &quad,
        ObsKind::Continuous,
    )
    .unwrap();
    let n = 400;
    let p1 = BicopParam::gaussian(rho1);
    let p2 = BicopParam::gaussian(rho2);
    for (i, subj) in pits.iter().enumerate() {
        let integrand = |v1: f64, v2: f64| {
            let mut prod = 1.0;
            for p in subj {
                let h = hfun(p.u, v1, &p1).unwrap();
                prod *= bicop_pdf(h, v2, &p2).unwrap() * bicop_pdf(p.u, v1, &p1).unwrap();
            }
            prod
        };
        // plain 400x400 midpoint: its own boundary error caps it near 1e-4
        let mut total = 0.0;
        for a in 0..n {
            let v1 = (a as f64 + 0.5) / n as f64;
            for b in 0..n {
                let v2 = (b as f64 + 0.5) / n as f64;
                total += integrand(v1, v2);
            }
        }
        let midpoint = (total / (n * n) as f64).ln();
        assert!(
            (parts.by_subject[i] - midpoint).abs() < 5e-4,
            "subject {i}: {} vs midpoint {}",
            parts.by_subject[i],
            midpoint
        );
        // boundary-aware brute force of the same integrand resolves 1e-5
        let brute = common::unit_square_integral(integrand).ln();
        assert!(
            (parts.by_subject[i] - brute).abs() < 1e-5,
            "subject {i}: {} vs {}",
            parts.by_subject[i],
            brute
        );
    }
}

#[test]
fn fit_recovers_truth_on_generated_normal_data() {
    let design = sim_preset::<f64>("normal-1f-gauss", 300, 606).unwrap();
    let data = generate_dataset(&design).unwrap();
    let marginal = fit_marginal(&data, None).unwrap();
    let pits = pit(&data, &marginal.params()).unwrap();
    let factor = fit_factor(
        &pits,
        FactorCopulaSpec::new(1, BicopFamily::Gaussian),
        &quad15(),
        &[],
        ObsKind::Continuous,
        marginal.loglik,
        marginal.dim(),
    )
    .unwrap();
    assert!((factor.rho1 - 0.5).abs() < 0.08, "rho1 = {}", factor.rho1);
}
