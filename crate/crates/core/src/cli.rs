//! Command-line front end. Every run writes its outputs plus one
//! `manifest.json` into `--out`; exit codes are 0 (converged / passed),
//! 1 (usage or input error) and 2 (not converged / certificate failed).

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::bench::{self, DesignSpec, ExperimentGrid, ModelSpec, SigmaType};
use crate::detect::{self, CvSettings, FitOptions, Tuning};
use crate::error::{Error, Result};
use crate::io::{self, RunManifest};
use crate::moments::{self, DataSet, ResponseColumn};
use crate::oracle;
use crate::solver::{self, SolverConfig};
use crate::tuning;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "phessian", version, about = "Sparse principal Hessian estimation for interaction detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit at a fixed penalty or a cross-validated one.
    Fit(FitArgs),
    /// Cross-validation curve over the penalty path, without the final refit.
    Cv(CvArgs),
    /// Draw a synthetic data set from one of the nine benchmark models.
    Simulate(SimulateArgs),
    /// Run a grid of replicated benchmark experiments.
    Bench(BenchArgs),
    /// Keep the highest-scoring columns by the plug-in screening rule.
    Prescreen(PrescreenArgs),
    /// Optimality certificate for an estimate (computed or supplied).
    OracleCheck(OracleArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// CSV file with one header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Response column name.
    #[arg(long, conflicts_with = "response_index")]
    pub response: Option<String>,
    /// Response column position (0-based).
    #[arg(long)]
    pub response_index: Option<usize>,
    /// Scale predictors to unit variance before fitting.
    #[arg(long)]
    pub standardize: bool,
}

impl DataArgs {
    fn response_column(&self) -> ResponseColumn {
        match (&self.response, self.response_index) {
            (_, Some(k)) => ResponseColumn::Index(k),
            (Some(name), None) => ResponseColumn::Name(name.clone()),
            (None, None) => ResponseColumn::default(),
        }
    }

    fn load(&self) -> Result<DataSet> {
        moments::load_csv(&self.data, &self.response_column())
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolverArgs {
    /// Stopping tolerance on the primal and dual residuals.
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    /// ADMM augmented-Lagrangian parameter.
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
}

impl SolverArgs {
    fn config(&self) -> Result<SolverConfig> {
        let cfg = SolverConfig {
            tol: self.tol,
            rho: self.rho,
            max_iter: self.max_iter,
            ..SolverConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CvArgsShared {
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    /// Number of penalties on the log grid.
    #[arg(long, default_value_t = 20)]
    pub grid_size: usize,
    /// Ratio between the largest and smallest penalty.
    #[arg(long, default_value_t = 100.0)]
    pub span: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Fixed penalty.
    #[arg(long, required_unless_present = "cv", conflicts_with = "cv")]
    pub lambda: Option<f64>,
    /// Choose the penalty by K-fold cross-validation (needs --seed).
    #[arg(long, requires = "seed")]
    pub cv: bool,
    #[command(flatten)]
    pub cv_opts: CvArgsShared,
    /// Pre-screen to this many columns before fitting.
    #[arg(long)]
    pub screen: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub cv_opts: CvArgsShared,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// Benchmark model, 1..=9.
    #[arg(long)]
    pub model: u8,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: usize,
    /// Toeplitz correlation of the design (0 gives the identity).
    #[arg(long, default_value_t = 0.0)]
    pub rho: f64,
    /// Noise standard deviation.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BenchArgs {
    /// JSON grid: {"n": 100, "models": [...], "settings": [{"rho", "sigma"}], "dims": [...]}.
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub reps: usize,
    /// Base seed; replication r uses seed + r.
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub cv_opts: CvArgsShared,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PrescreenArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Number of columns to keep.
    #[arg(long)]
    pub keep: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OracleArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub lambda: f64,
    /// Dense p x p estimate to certify; when absent the ADMM solver is run.
    #[arg(long)]
    pub psi: Option<PathBuf>,
    /// KKT slack; defaults to 1e-6 for a supplied estimate and to the
    /// solver-tolerance-scaled slack for a computed one.
    #[arg(long)]
    pub kkt_tol: Option<f64>,
    /// Also solve with the dense reference solver and compare (p <= 50).
    #[arg(long)]
    pub reference: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            // help and version go to stdout, usage errors to stderr
            let _ = e.print();
            return code;
        }
    };
    let command_line: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match dispatch(&cli.command, command_line) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

fn dispatch(command: &Command, command_line: Vec<String>) -> Result<i32> {
    match command {
        Command::Fit(a) => with_jobs(a.jobs, || cmd_fit(a, command_line)),
        Command::Cv(a) => with_jobs(a.jobs, || cmd_cv(a, command_line)),
        Command::Simulate(a) => cmd_simulate(a, command_line),
        Command::Bench(a) => with_jobs(a.jobs, || cmd_bench(a, command_line)),
        Command::Prescreen(a) => cmd_prescreen(a, command_line),
        Command::OracleCheck(a) => cmd_oracle_check(a, command_line),
    }
}

fn with_jobs<F>(jobs: Option<usize>, f: F) -> Result<i32>
where
    F: FnOnce() -> Result<i32> + Send,
{
    match jobs {
        None => f(),
        Some(0) => Err(Error::InvalidConfig("--jobs must be at least 1".into())),
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(f),
    }
}

fn manifest<A: Serialize>(name: &str, command_line: Vec<String>, args: &A) -> Result<RunManifest> {
    let mut m = RunManifest::new(name, command_line);
    m.parameters = serde_json::to_value(args)?;
    Ok(m)
}

fn finish(mut m: RunManifest, dir: &Path, outputs: &[&str], start: Instant) -> Result<()> {
    m.outputs = outputs.iter().map(|s| s.to_string()).collect();
    m.wall_time_seconds = start.elapsed().as_secs_f64();
    m.write(dir)?;
    Ok(())
}

fn cv_settings(opts: &CvArgsShared, seed: u64) -> CvSettings {
    CvSettings {
        grid_size: opts.grid_size,
        span: opts.span,
        folds: opts.folds,
        seed,
    }
}

pub fn cmd_fit(a: &FitArgs, command_line: Vec<String>) -> Result<i32> {
    let start = Instant::now();
    let mut m = manifest("fit", command_line, a)?;
    m.add_input(&a.data.data)?;
    let data = a.data.load()?;
    let tuning = match (a.lambda, a.seed) {
        (Some(lambda), _) => Tuning::Fixed(lambda),
        (None, Some(seed)) => Tuning::CrossValidated(cv_settings(&a.cv_opts, seed)),
        (None, None) => return Err(Error::InvalidConfig("--cv requires --seed".into())),
    };
    let opts = FitOptions {
        solver: a.solver.config()?,
        tuning,
        screen: a.screen,
        standardize: a.data.standardize,
    };
    m.seeds = a.seed.into_iter().collect();
    let fit = detect::fit_pipeline(&data, &opts)?;

    io::create_dir(&a.out)?;
    io::write_matrix_csv(&a.out.join("psi.csv"), &fit.estimate.to_dense(data.p()))?;
    io::write_json(&a.out.join("support.json"), &io::support_entries(&fit.estimate))?;
    let mut outputs = vec!["psi.csv", "support.json"];
    if let Some(cv) = &fit.cv {
        io::write_json(&a.out.join("cv.json"), cv)?;
        outputs.push("cv.json");
    }
    if let Some(screen) = &fit.screen {
        io::write_json(&a.out.join("screen.json"), &screen_json(screen, &data))?;
        outputs.push("screen.json");
    }
    let r = &fit.report;
    m.summary = json!({
        "lambda": fit.estimate.lambda,
        "converged": r.converged,
        "iterations": r.state.iter,
        "eta_p": r.state.eta_p,
        "eta_d": r.state.eta_d,
        "objective": r.state.objective,
        "tau": r.tau,
        "support_size": fit.estimate.support.len(),
        "spectral_warning": r.spectral_warning,
    });
    finish(m, &a.out, &outputs, start)?;
    if !r.converged {
        eprintln!(
            "warning: not converged after {} iterations (eta_p = {:.3e}, eta_d = {:.3e}); outputs written",
            r.state.iter, r.state.eta_p, r.state.eta_d
        );
        return Ok(EXIT_NOT_CONVERGED);
    }
    Ok(EXIT_OK)
}

pub fn cmd_cv(a: &CvArgs, command_line: Vec<String>) -> Result<i32> {
    let start = Instant::now();
    let mut m = manifest("cv", command_line, a)?;
    m.add_input(&a.data.data)?;
    m.seeds = vec![a.seed];
    let data = a.data.load()?;
    let data = if a.data.standardize { moments::standardize(&data) } else { data };
    let moments = moments::compute_moments(&data)?;
    let path = tuning::lambda_path(&moments, data.n(), a.cv_opts.grid_size, a.cv_opts.span)?;
    let cv = tuning::cv_select(&data, &path, a.cv_opts.folds, a.seed, &a.solver.config()?)?;

    io::create_dir(&a.out)?;
    let rows: Vec<Vec<String>> = (0..cv.lambdas.len())
        .map(|l| {
            vec![
                cv.lambdas[l].to_string(),
                cv.mean[l].to_string(),
                cv.std_err[l].to_string(),
                (l == cv.selected_index).to_string(),
            ]
        })
        .collect();
    io::write_rows_csv(&a.out.join("cv.csv"), &["lambda", "mean_loss", "std_err", "selected"], &rows)?;
    io::write_json(&a.out.join("cv.json"), &cv)?;
    m.summary = json!({
        "selected_lambda": cv.selected_lambda,
        "selected_index": cv.selected_index,
        "anchor": path.anchor,
        "failed_folds": cv.failed_folds,
    });
    finish(m, &a.out, &["cv.csv", "cv.json"], start)?;
    Ok(EXIT_OK)
}

pub fn cmd_simulate(a: &SimulateArgs, command_line: Vec<String>) -> Result<i32> {
    let start = Instant::now();
    let mut m = manifest("simulate", command_line, a)?;
    m.seeds = vec![a.seed];
    let model = ModelSpec::new(a.model, a.sigma)?;
    let design = DesignSpec {
        n: a.n,
        p: a.p,
        sigma: SigmaType::from_rho(a.rho),
        seed: a.seed,
    };
    design.validate()?;
    let data = bench::simulate(&design, &model)?;

    io::create_dir(&a.out)?;
    io::write_dataset_csv(&a.out.join("data.csv"), &data)?;
    io::write_json(&a.out.join("truth.json"), &io::pairs_one_based(&model.truth()))?;
    m.summary = json!({ "variance_pair": model.variance_pair().map(|p| [p.i + 1, p.j + 1]) });
    finish(m, &a.out, &["data.csv", "truth.json"], start)?;
    Ok(EXIT_OK)
}

pub fn cmd_bench(a: &BenchArgs, command_line: Vec<String>) -> Result<i32> {
    let start = Instant::now();
    if a.reps == 0 {
        return Err(Error::InvalidConfig("--reps must be at least 1".into()));
    }
    let mut m = manifest("bench", command_line, a)?;
    m.add_input(&a.grid)?;
    m.seeds = vec![a.seed];
    let text = std::fs::read_to_string(&a.grid).map_err(|e| Error::io(&a.grid, e))?;
    let grid = ExperimentGrid::from_json(&text)?;
    let method = FitOptions {
        solver: a.solver.config()?,
        tuning: Tuning::CrossValidated(cv_settings(&a.cv_opts, a.seed)),
        screen: None,
        standardize: false,
    };

    let mut reports = Vec::new();
    for cell in grid.cells()? {
        let design = DesignSpec {
            n: cell.n,
            p: cell.p,
            sigma: SigmaType::from_rho(cell.rho),
            seed: a.seed,
        };
        reports.push(bench::run_experiment(&design, &cell.model, a.reps, &method)?);
    }

    io::create_dir(&a.out)?;
    let rows: Vec<Vec<String>> = reports.iter().map(bench::results_row).collect();
    io::write_rows_csv(&a.out.join("results.csv"), &bench::RESULTS_HEADER, &rows)?;
    io::write_json(&a.out.join("reps.json"), &reports)?;
    let not_converged: usize = reports
        .iter()
        .map(|r| r.records.iter().filter(|x| !x.converged).count())
        .sum();
    let failures: usize = reports.iter().map(|r| r.failures.len()).sum();
    m.summary = json!({ "cells": reports.len(), "not_converged": not_converged, "failures": failures });
    finish(m, &a.out, &["results.csv", "reps.json"], start)?;
    if not_converged > 0 {
        eprintln!("warning: {not_converged} replication fits did not converge");
        return Ok(EXIT_NOT_CONVERGED);
    }
    Ok(EXIT_OK)
}

fn screen_json(screen: &detect::ScreenReport, data: &DataSet) -> serde_json::Value {
    json!({
        "keep": screen.keep,
        "kept": screen.kept.iter().map(|k| k + 1).collect::<Vec<_>>(),
        "kept_names": screen.kept.iter().map(|&k| data.names()[k].clone()).collect::<Vec<_>>(),
        "scores": screen.scores,
    })
}

pub fn cmd_prescreen(a: &PrescreenArgs, command_line: Vec<String>) -> Result<i32> {
    let start = Instant::now();
    let mut m = manifest("prescreen", command_line, a)?;
    m.add_input(&a.data.data)?;
    let data = a.data.load()?;
    let data = if a.data.standardize { moments::standardize(&data) } else { data };
    let screen = detect::prescreen(&data, a.keep)?;
    io::create_dir(&a.out)?;
    io::write_json(&a.out.join("screen.json"), &screen_json(&screen, &data))?;
    finish(m, &a.out, &["screen.json"], start)?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct ReferenceComparison {
    reference_objective: f64,
    candidate_objective: f64,
    relative_gap: f64,
    support_agrees: bool,
    reference_iterations: usize,
}

pub fn cmd_oracle_check(a: &OracleArgs, command_line: Vec<String>) -> Result<i32> {
    let start = Instant::now();
    let mut m = manifest("oracle-check", command_line, a)?;
    m.add_input(&a.data.data)?;
    let data = a.data.load()?;
    let data = if a.data.standardize { moments::standardize(&data) } else { data };
    let moments = moments::compute_moments(&data)?;

    let (psi, default_tol) = match &a.psi {
        Some(path) => {
            m.add_input(path)?;
            let psi = io::read_matrix_csv(path)?;
            if psi.nrows() != data.p() {
                return Err(Error::InvalidData(format!(
                    "estimate is {0}x{0} but the data have p = {1}",
                    psi.nrows(),
                    data.p()
                )));
            }
            (psi, 1e-6)
        }
        None => {
            let cfg = a.solver.config()?.with_lambda(a.lambda);
            let report = solver::solve(&moments, &cfg, None)?;
            (report.state.phi, oracle::admm_kkt_tolerance(&moments.s, cfg.tol))
        }
    };
    let cert = oracle::kkt_check(&psi, &moments, a.lambda, a.kkt_tol.unwrap_or(default_tol));

    let comparison = if a.reference {
        let r = oracle::reference_solve_detailed(&moments, a.lambda, 1e-12, 100_000)?;
        let candidate = solver::penalized_objective(&moments, &psi, a.lambda);
        let support = |x: &nalgebra::DMatrix<f64>| x.map(|v| v.abs() >= 1e-8);
        Some(ReferenceComparison {
            reference_objective: r.objective,
            candidate_objective: candidate,
            relative_gap: (candidate - r.objective).abs() / r.objective.abs().max(1.0),
            support_agrees: support(&psi) == support(&r.psi),
            reference_iterations: r.iterations,
        })
    } else {
        None
    };

    io::create_dir(&a.out)?;
    io::write_json(
        &a.out.join("certificate.json"),
        &json!({ "kkt": cert, "reference": comparison }),
    )?;
    m.summary = json!({ "passed": cert.passed });
    finish(m, &a.out, &["certificate.json"], start)?;
    Ok(if cert.passed { EXIT_OK } else { EXIT_NOT_CONVERGED })
}
