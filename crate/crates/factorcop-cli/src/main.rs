//! Command-line front end: fit factor-copula models to longitudinal CSV
//! data, simulate datasets from the study designs, and run the Monte Carlo
//! estimation and model-comparison studies.
//!
//! Every run writes a `manifest.json` carrying the full configuration,
//! seed and crate version, enough to reproduce the outputs byte for byte.
//! Exit codes: 2 for data problems, 3 for convergence problems.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use factorcop::bicopula::BicopFamily;
use factorcop::dataset::{load_csv_with, write_csv_path, CsvSchema, LoadOptions, ResponseKind};
use factorcop::factor_model::{fit_factor, godambe_se, FactorCopulaSpec, ObsKind};
use factorcop::marginals::{fit_marginal, pit};
use factorcop::mixed::{fit_mixed, MixedSpec};
use factorcop::quadrature::{make_quadrature, QuadMode, DEFAULT_QUAD_POINTS};
use factorcop::simulator::{
    comparison_preset, generate_dataset, mc_study, sim_preset, two_stage_recipe,
};
use factorcop::Error;

#[derive(Parser, Serialize)]
#[command(
    name = "factorcop",
    version,
    about = "Factor copula models for unbalanced longitudinal data (two-stage estimation)"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
enum Command {
    /// Two-stage fit of a factor copula (or a mixed baseline) to CSV data
    Fit(FitArgs),
    /// Simulate a dataset from a named study design
    Simulate(SimulateArgs),
    /// Monte Carlo estimation study: simulate, refit, report bias/SD/SE/RMSE
    McStudy(McArgs),
    /// Model-comparison study: PCI of AIC/BIC over candidate models
    Compare(CompareArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
enum ResponseArg {
    Gamma,
    Normal,
    Binary,
    Ordinal,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
enum CopulaArg {
    Gaussian,
    T,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
enum QuadArg {
    Legendre,
    HermiteProbit,
}

impl From<QuadArg> for QuadMode {
    fn from(q: QuadArg) -> Self {
        match q {
            QuadArg::Legendre => QuadMode::Legendre,
            QuadArg::HermiteProbit => QuadMode::HermiteProbit,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
enum FormatArg {
    Json,
    Csv,
    Text,
}

#[derive(Args, Serialize)]
struct FitArgs {
    /// Long-format CSV file: one row per observation
    #[arg(long)]
    data: PathBuf,
    /// Marginal family of the response
    #[arg(long, value_enum)]
    response: ResponseArg,
    /// Number of ordinal categories (ordinal responses only)
    #[arg(long = "K", default_value_t = 4)]
    k: usize,
    /// Number of latent factors
    #[arg(long, default_value_t = 1)]
    factors: u8,
    /// Linking-copula family
    #[arg(long, value_enum, default_value_t = CopulaArg::Gaussian)]
    copula: CopulaArg,
    /// Degrees-of-freedom profile grid `a:b` for the t copula
    #[arg(long, default_value = "3:30")]
    nu_grid: String,
    /// Quadrature rule for the latent integrals
    #[arg(long, value_enum, default_value_t = QuadArg::HermiteProbit)]
    quad: QuadArg,
    /// Number of quadrature points
    #[arg(long, default_value_t = DEFAULT_QUAD_POINTS)]
    quad_n: usize,
    /// Physical name of the subject-id column
    #[arg(long, default_value = "id")]
    col_id: String,
    /// Physical name of the time column
    #[arg(long, default_value = "time")]
    col_time: String,
    /// Physical name of the response column
    #[arg(long, default_value = "y")]
    col_y: String,
    /// Comma-separated covariate columns (time must be listed to enter the
    /// regression)
    #[arg(long, default_value = "")]
    col_x: String,
    /// Recode an ordinal response stored as 0..K-1 up to 1..K
    #[arg(long, default_value_t = false)]
    recode: bool,
    /// Divide times by this factor on load (e.g. 365.25: days to years)
    #[arg(long)]
    time_scale: Option<f64>,
    /// Also fit the RI (factors=1) or RIS (factors=2) mixed baseline
    #[arg(long, default_value_t = false)]
    with_mixed: bool,
    /// Slope scaling of the RIS design column (real-data default 1.0)
    #[arg(long, default_value_t = 1.0)]
    slope_scale: f64,
    /// Output directory
    #[arg(long, default_value = "factorcop-fit")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    /// Design name: {gamma,normal,binary,ordinal}-{1f,2f}-{gauss,t}
    #[arg(long)]
    preset: String,
    /// Number of subjects
    #[arg(long, default_value_t = 200)]
    m: usize,
    #[arg(long, default_value_t = 20240808)]
    seed: u64,
    /// Output CSV path
    #[arg(long, default_value = "simulated.csv")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct McArgs {
    /// Design name: {gamma,normal,binary,ordinal}-{1f,2f}-{gauss,t}
    #[arg(long)]
    preset: String,
    #[arg(long, default_value_t = 200)]
    m: usize,
    /// Number of Monte Carlo replications
    #[arg(long = "N", default_value_t = 500)]
    n_reps: usize,
    #[arg(long, default_value_t = 20240808)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = QuadArg::HermiteProbit)]
    quad: QuadArg,
    #[arg(long, default_value_t = DEFAULT_QUAD_POINTS)]
    quad_n: usize,
    /// Degrees-of-freedom profile grid `a:b` for t-copula designs
    #[arg(long, default_value = "4:4")]
    nu_grid: String,
    /// Worker threads (0 = rayon default)
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long, default_value = "factorcop-mc")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Text)]
    format: FormatArg,
}

#[derive(Args, Serialize)]
struct CompareArgs {
    /// Marginal family of the comparison grid
    #[arg(long, value_enum)]
    marginal: ResponseArg,
    /// Compare 2-factor copulas against the RIS baseline instead of
    /// 1-factor against RI
    #[arg(long, default_value_t = 1)]
    factors: u8,
    #[arg(long, default_value_t = 200)]
    m: usize,
    /// Number of comparison replications
    #[arg(long = "N", default_value_t = 100)]
    n_reps: usize,
    #[arg(long, default_value_t = 20240808)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = QuadArg::HermiteProbit)]
    quad: QuadArg,
    #[arg(long, default_value_t = DEFAULT_QUAD_POINTS)]
    quad_n: usize,
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long, default_value = "factorcop-compare")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Text)]
    format: FormatArg,
}

fn log_enabled() -> bool {
    matches!(
        std::env::var("FACTORCOP_LOG").as_deref(),
        Ok("info") | Ok("debug") | Ok("trace")
    )
}

macro_rules! info {
    ($($arg:tt)*) => {
        if log_enabled() {
            eprintln!($($arg)*);
        }
    };
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Fit(args) => run_fit(args),
        Command::Simulate(args) => run_simulate(args),
        Command::McStudy(args) => run_mc_study(args),
        Command::Compare(args) => run_compare(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NonConvergence { .. } | Error::Singular(_) => 3,
        _ => 2,
    }
}

fn response_kind(r: ResponseArg, k: usize) -> ResponseKind {
    match r {
        ResponseArg::Gamma => ResponseKind::GammaLog,
        ResponseArg::Normal => ResponseKind::NormalIdentity,
        ResponseArg::Binary => ResponseKind::BinaryProbit,
        ResponseArg::Ordinal => ResponseKind::OrdinalProbit { k },
    }
}

fn parse_nu_grid(s: &str) -> Result<Vec<u32>, Error> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| Error::Domain(format!("nu grid must look like a:b, got `{s}`")))?;
    let a: u32 = a
        .parse()
        .map_err(|_| Error::Domain(format!("bad nu grid start `{a}`")))?;
    let b: u32 = b
        .parse()
        .map_err(|_| Error::Domain(format!("bad nu grid end `{b}`")))?;
    if a < 2 || b < a {
        return Err(Error::Domain(format!(
            "nu grid {a}:{b} is empty or below 2"
        )));
    }
    Ok((a..=b).collect())
}

fn configure_pool(jobs: usize) {
    if jobs > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
}

fn write_manifest<A: Serialize>(
    dir: &Path,
    command: &str,
    args: &A,
    seed: Option<u64>,
) -> Result<(), Error> {
    #[derive(Serialize)]
    struct Manifest<'a, A> {
        command: &'a str,
        version: &'a str,
        seed: Option<u64>,
        config: &'a A,
    }
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed,
        config: args,
    };
    let body = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Domain(format!("manifest serialization failed: {e}")))?;
    std::fs::write(dir.join("manifest.json"), body)?;
    Ok(())
}

fn write_json<V: Serialize>(path: &Path, value: &V) -> Result<(), Error> {
    let body = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Domain(format!("serialization failed: {e}")))?;
    std::fs::write(path, body)?;
    Ok(())
}

fn run_fit(args: &FitArgs) -> Result<(), Error> {
    let kind = response_kind(args.response, args.k);
    let schema = CsvSchema {
        id: args.col_id.clone(),
        time: args.col_time.clone(),
        y: args.col_y.clone(),
        covariates: args
            .col_x
            .split(',')
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect(),
    };
    let options = LoadOptions {
        recode_ordinal: args.recode,
        time_scale: args.time_scale,
    };
    let data = load_csv_with::<f64>(&args.data, kind, &schema, &options)?;
    info!(
        "loaded {} subjects, {} observations",
        data.n_subjects(),
        data.n_obs_total()
    );

    let quad = make_quadrature::<f64>(args.quad.into(), args.quad_n)?;
    let marginal = fit_marginal(&data, None)?;
    info!("stage 1 done: loglik {:.4}", marginal.loglik);
    let pits = pit(&data, &marginal.params())?;
    let family = match args.copula {
        CopulaArg::Gaussian => BicopFamily::Gaussian,
        CopulaArg::T => BicopFamily::StudentT,
    };
    let nu_grid = match family {
        BicopFamily::StudentT => parse_nu_grid(&args.nu_grid)?,
        BicopFamily::Gaussian => vec![],
    };
    let factor = fit_factor(
        &pits,
        FactorCopulaSpec::new(args.factors, family),
        &quad,
        &nu_grid,
        ObsKind::from(kind),
        marginal.loglik,
        marginal.dim(),
    )?;
    info!(
        "stage 2 done: rho1 {:.4} loglik {:.4} AIC {:.2}",
        factor.rho1, factor.loglik, factor.aic
    );
    let godambe = godambe_se(&data, &marginal, &factor, &quad)?;

    std::fs::create_dir_all(&args.out)?;
    write_json(&args.out.join("marginal_fit.json"), &marginal)?;
    write_json(&args.out.join("factor_fit.json"), &factor)?;
    write_json(&args.out.join("godambe.json"), &godambe)?;

    let mixed = if args.with_mixed {
        let spec = MixedSpec {
            n_random: args.factors,
            slope_scale: args.slope_scale,
            quad_points: args.quad_n,
        };
        let fit = fit_mixed(&data, &spec, None)?;
        write_json(&args.out.join("mixed_fit.json"), &fit)?;
        Some(fit)
    } else {
        None
    };

    // one-page text summary in the tables' shape
    let mut s = String::new();
    s.push_str(&format!(
        "Two-stage factor copula fit ({} subjects, {} observations)\n\n",
        data.n_subjects(),
        data.n_obs_total()
    ));
    s.push_str("Marginal parameters (stage 1)\n");
    s.push_str(&format!(
        "  {:<10} {:>10} {:>10}\n",
        "parameter", "est", "se"
    ));
    let names = factorcop::marginals::param_names(kind, marginal.beta.len());
    let nat = factorcop::marginals::pack_natural(&marginal.params());
    for ((name, est), se) in names.iter().zip(&nat).zip(&godambe.se) {
        s.push_str(&format!("  {:<10} {:>10.4} {:>10.4}\n", name, est, se));
    }
    s.push_str(&format!(
        "\nDependence (stage 2): {} {}-factor",
        factor.spec.family, factor.spec.n_factors
    ));
    if let Some(nu) = factor.nu {
        s.push_str(&format!(" (nu = {nu})"));
    }
    s.push('\n');
    let dep_names: Vec<&str> = if factor.rho2.is_some() {
        vec!["rho1", "rho2"]
    } else {
        vec!["rho1"]
    };
    let dep_se = &godambe.se[nat.len()..];
    let dep_est = [Some(factor.rho1), factor.rho2];
    for (i, name) in dep_names.iter().enumerate() {
        s.push_str(&format!(
            "  {:<10} {:>10.4} {:>10.4}\n",
            name,
            dep_est[i].unwrap(),
            dep_se[i]
        ));
    }
    s.push_str(&format!(
        "\n  loglik {:.2}   AIC {:.2}   BIC {:.2}   (dim {}, quad {} n={})\n",
        factor.loglik, factor.aic, factor.bic, factor.dim, factor.quad.mode, factor.quad.n
    ));
    if let Some(fit) = &mixed {
        s.push_str(&format!(
            "\nMixed baseline ({}): loglik {:.2}  AIC {:.2}  BIC {:.2}\n",
            if args.factors == 1 { "RI" } else { "RIS" },
            fit.loglik,
            fit.aic,
            fit.bic
        ));
    }
    std::fs::write(args.out.join("summary.txt"), &s)?;
    write_manifest(&args.out, "fit", args, None)?;
    println!("{s}");
    Ok(())
}

fn run_simulate(args: &SimulateArgs) -> Result<(), Error> {
    let design = sim_preset::<f64>(&args.preset, args.m, args.seed)
        .ok_or_else(|| Error::Domain(format!("unknown preset `{}`", args.preset)))?;
    let data = generate_dataset(&design)?;
    write_csv_path(&data, &args.out)?;
    if let Some(dir) = args.out.parent() {
        let dir = if dir.as_os_str().is_empty() {
            Path::new(".")
        } else {
            dir
        };
        write_manifest(dir, "simulate", args, Some(args.seed))?;
    }
    info!(
        "wrote {} subjects / {} rows to {}",
        data.n_subjects(),
        data.n_obs_total(),
        args.out.display()
    );
    Ok(())
}

fn run_mc_study(args: &McArgs) -> Result<(), Error> {
    configure_pool(args.jobs);
    let design = sim_preset::<f64>(&args.preset, args.m, args.seed)
        .ok_or_else(|| Error::Domain(format!("unknown preset `{}`", args.preset)))?;
    let nu_grid = match design.copula.family {
        BicopFamily::StudentT => parse_nu_grid(&args.nu_grid)?,
        BicopFamily::Gaussian => vec![],
    };
    let spec = FactorCopulaSpec::new(design.copula.n_factors(), design.copula.family);
    let recipe = two_stage_recipe::<f64>(spec, nu_grid, (args.quad.into(), args.quad_n));
    info!("running {} replications of {}", args.n_reps, args.preset);
    let report = mc_study(&design, recipe, args.n_reps)?;

    std::fs::create_dir_all(&args.out)?;
    write_json(&args.out.join("mc_report.json"), &report)?;
    std::fs::write(args.out.join("mc_report.csv"), report.to_csv())?;
    std::fs::write(args.out.join("mc_report.txt"), report.to_text())?;
    write_manifest(&args.out, "mc-study", args, Some(args.seed))?;
    match args.format {
        FormatArg::Json => println!(
            "{}",
            serde_json::to_string_pretty(&report).map_err(|e| Error::Domain(e.to_string()))?
        ),
        FormatArg::Csv => println!("{}", report.to_csv()),
        FormatArg::Text => println!("{}", report.to_text()),
    }
    Ok(())
}

fn run_compare(args: &CompareArgs) -> Result<(), Error> {
    configure_pool(args.jobs);
    let family = match args.marginal {
        ResponseArg::Gamma => "gamma",
        ResponseArg::Normal => "normal",
        ResponseArg::Binary => "binary",
        ResponseArg::Ordinal => "ordinal",
    };
    let (generators, candidates) =
        comparison_preset::<f64>(family, args.factors == 2, args.m, args.seed)
            .ok_or_else(|| Error::Domain(format!("unknown comparison family `{family}`")))?;
    info!(
        "comparison study: {} generators x {} candidates x {} replications",
        generators.len(),
        candidates.len(),
        args.n_reps
    );
    let report = factorcop::simulator::model_comparison_study(
        &generators,
        &candidates,
        args.n_reps,
        (args.quad.into(), args.quad_n),
    )?;
    std::fs::create_dir_all(&args.out)?;
    write_json(&args.out.join("pci_report.json"), &report)?;
    std::fs::write(args.out.join("pci_report.csv"), report.to_csv())?;
    std::fs::write(args.out.join("pci_report.txt"), report.to_text())?;
    write_manifest(&args.out, "compare", args, Some(args.seed))?;
    match args.format {
        FormatArg::Json => println!(
            "{}",
            serde_json::to_string_pretty(&report).map_err(|e| Error::Domain(e.to_string()))?
        ),
        FormatArg::Csv => println!("{}", report.to_csv()),
        FormatArg::Text => println!("{}", report.to_text()),
    }
    Ok(())
}
