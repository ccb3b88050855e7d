//! Command-line surface: `simulate`, `fit`, `rank`, `check`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 no converged start.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{NgseError, Result};
use crate::estimator::{self, hessian, FitOptions, Optimizer};
use crate::io::config::{self, KeyValueConfig, FIT_KEYS};
use crate::io::measurements::{read_measurements, write_measurements, write_truths};
use crate::io::report::{ranking_table, write_report, Report};
use crate::likelihood::quadrature_doubling_gap;
use crate::model_types::{ModelConfig, DEFAULT_QUADRATURE_NODES};
use crate::ranking::{rank_methods, RankingMode};
use crate::simulator::simulate;

pub const THREADS_ENV: &str = "NGSE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "ngse", version, about = "No-gold-standard evaluation of measurement methods")]
pub struct Cli {
    /// Worker threads (overrides NGSE_THREADS).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a measurement CSV and a truth sidecar from a simulation config.
    Simulate(SimulateArgs),
    /// Fit the model to a measurement CSV and write a JSON report.
    Fit(FitArgs),
    /// Print the ranking table of a report.
    Rank(RankArgs),
    /// Quadrature-doubling and Hessian-symmetry diagnostics for a report.
    Check(CheckArgs),
}

#[derive(Debug, Args, Clone)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "data.csv")]
    pub out: PathBuf,
    /// Truth sidecar path; defaults to `<out stem>.truth.csv`.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub patients: Option<usize>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct FitArgs {
    /// Flat key = value file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub nll_tolerance: Option<f64>,
    #[arg(long)]
    pub param_tolerance: Option<f64>,
    #[arg(long)]
    pub nodes: Option<usize>,
    /// `raw` or `normalized` (default: normalized for order 1, raw otherwise).
    #[arg(long)]
    pub ranking: Option<RankingMode>,
    /// Map values from [lo, hi] to [0, 1] at ingestion, given as `lo,hi`.
    #[arg(long)]
    pub rescale: Option<String>,
    /// `quasi-newton` (default) or `nelder-mead`.
    #[arg(long)]
    pub optimizer: Option<Optimizer>,
    #[arg(long)]
    pub no_std_errors: bool,
}

#[derive(Debug, Args, Clone)]
pub struct RankArgs {
    #[arg(long)]
    pub report: PathBuf,
    /// Re-rank with a different mode.
    #[arg(long)]
    pub mode: Option<RankingMode>,
}

#[derive(Debug, Args, Clone)]
pub struct CheckArgs {
    #[arg(long)]
    pub report: PathBuf,
    /// Measurement CSV; defaults to the source recorded in the report.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

/// Fully resolved settings for one fit.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: PathBuf,
    pub output: PathBuf,
    pub poly_order: usize,
    pub quadrature_nodes: usize,
    pub options: FitOptions,
    pub ranking: Option<RankingMode>,
    pub rescale: Option<[f64; 2]>,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn resolve(args: &FitArgs) -> Result<Self> {
        let file = match &args.config {
            Some(p) => {
                let c = KeyValueConfig::load(p)?;
                c.check_keys(FIT_KEYS)?;
                c
            }
            None => KeyValueConfig::default(),
        };
        let defaults = FitOptions::default();
        let input = args
            .input
            .clone()
            .or(file.get::<PathBuf>("input")?)
            .ok_or_else(|| NgseError::Config("no input file given".into()))?;
        let output = args
            .out
            .clone()
            .or(file.get::<PathBuf>("output")?)
            .unwrap_or_else(|| PathBuf::from("report.json"));
        if input.as_os_str().is_empty() || output.as_os_str().is_empty() {
            return Err(NgseError::Config("paths must be nonempty".into()));
        }
        let rescale = match args.rescale.as_deref().or(file.raw("rescale")) {
            Some(s) => Some(config::parse_interval(s)?),
            None => None,
        };
        let ranking = match args.ranking {
            Some(m) => Some(m),
            None => file.get::<RankingMode>("ranking")?,
        };
        let options = FitOptions {
            n_starts: pick(args.starts, file.get("starts")?, defaults.n_starts),
            max_iterations: pick(args.max_iterations, file.get("max_iterations")?, defaults.max_iterations),
            nll_tolerance: pick(args.nll_tolerance, file.get("nll_tolerance")?, defaults.nll_tolerance),
            param_tolerance: pick(args.param_tolerance, file.get("param_tolerance")?, defaults.param_tolerance),
            seed: pick(args.seed, file.get("seed")?, defaults.seed),
            compute_std_errors: !args.no_std_errors,
            optimizer: pick(args.optimizer, file.get("optimizer")?, defaults.optimizer),
        };
        options.validate()?;
        Ok(Self {
            input,
            output,
            poly_order: pick(args.order, file.get("order")?, 1),
            quadrature_nodes: pick(args.nodes, file.get("quadrature_nodes")?, DEFAULT_QUADRATURE_NODES),
            options,
            ranking,
            rescale,
            threads: file.get("threads")?,
        })
    }
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Reads the measurements, fits, ranks, and assembles the report. Only
/// `config.input` is opened.
pub fn run_fit(config: &RunConfig) -> Result<Report> {
    let (data, provenance) = read_measurements(&config.input, config.rescale)?;
    let model = ModelConfig::with_nodes(data.num_methods(), config.poly_order, config.quadrature_nodes)?;
    let result = estimator::fit(&data, &model, &config.options)?;
    let mode = config
        .ranking
        .unwrap_or_else(|| RankingMode::default_for_order(model.poly_order));
    let ranking = rank_methods(&result, mode)?;
    Ok(Report::new(
        &result,
        &ranking,
        &model,
        &config.options,
        provenance,
        data.num_patients(),
    ))
}

fn truth_path_for(out: &Path) -> PathBuf {
    let stem = out.file_stem().map_or_else(|| "data".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.truth.csv"))
}

fn run_simulate(args: &SimulateArgs) -> Result<String> {
    let cfg = KeyValueConfig::load(&args.config)?;
    let mut spec = config::simulation_spec(&cfg)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(p) = args.patients {
        if p == 0 {
            return Err(NgseError::Config("patients must be positive".into()));
        }
        spec.patients = p;
    }
    let (data, truths) = simulate(&spec);
    let truth_path = args.truth.clone().unwrap_or_else(|| truth_path_for(&args.out));
    write_measurements(&data, std::fs::File::create(&args.out)?)?;
    write_truths(data.patient_ids(), &truths, std::fs::File::create(&truth_path)?)?;
    Ok(format!(
        "wrote {} patients x {} methods to {} (truths in {})\n",
        data.num_patients(),
        data.num_methods(),
        args.out.display(),
        truth_path.display()
    ))
}

fn run_rank(args: &RankArgs) -> Result<String> {
    let report = Report::load(&args.report)?;
    let ranking = match args.mode {
        Some(mode) if mode != report.ranking.mode => rank_methods(&report.estimation_result()?, mode)?,
        _ => report.ranking.clone(),
    };
    Ok(ranking_table(&ranking))
}

/// Diagnostics printed by `check`.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckSummary {
    pub quadrature_gap_per_patient: f64,
    pub hessian_asymmetry: f64,
    pub std_errors_available: bool,
}

pub fn check_report(report: &Report, input: Option<&Path>) -> Result<CheckSummary> {
    let path = input.map_or_else(|| PathBuf::from(&report.data.provenance.source), Path::to_path_buf);
    let (data, _) = read_measurements(&path, report.data.provenance.rescale)?;
    let model = report.model_config()?;
    let result = report.estimation_result()?;
    let gap = quadrature_doubling_gap(&data, &result.params, model.quadrature_nodes)?;
    let h = estimator::observed_information(&data, &result.params, &model)?;
    Ok(CheckSummary {
        quadrature_gap_per_patient: gap,
        hessian_asymmetry: hessian::relative_asymmetry(&h),
        std_errors_available: hessian::inverse_diagonal_sqrt(&h).is_ok(),
    })
}

fn run_check(args: &CheckArgs) -> Result<String> {
    let report = Report::load(&args.report)?;
    let s = check_report(&report, args.input.as_deref())?;
    Ok(format!(
        "quadrature |NLL(N) - NLL(2N)| / P : {:.3e}\n\
         hessian relative asymmetry       : {:.3e}\n\
         information positive definite    : {}\n",
        s.quadrature_gap_per_patient, s.hessian_asymmetry, s.std_errors_available
    ))
}

fn exit_code(err: &NgseError) -> i32 {
    match err {
        NgseError::NoConvergedStart { .. } => 3,
        NgseError::Config(_) => 1,
        _ => 2,
    }
}

fn thread_count(flag: Option<usize>, file: Option<usize>) -> Result<Option<usize>> {
    if let Some(n) = flag.or(file) {
        return Ok(Some(n));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| NgseError::Config(format!("{THREADS_ENV}={v:?} is not a thread count"))),
        Err(_) => Ok(None),
    }
}

fn in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| NgseError::Config(e.to_string()))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

fn dispatch(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Simulate(a) => in_pool(thread_count(cli.threads, None)?, || run_simulate(a))?,
        Command::Fit(a) => {
            let cfg = RunConfig::resolve(a)?;
            let threads = thread_count(cli.threads, cfg.threads)?;
            let report = in_pool(threads, || run_fit(&cfg))??;
            write_report(&report, &cfg.output)?;
            Ok(format!("{}report written to {}\n", ranking_table(&report.ranking), cfg.output.display()))
        }
        Command::Rank(a) => run_rank(a),
        Command::Check(a) => in_pool(thread_count(cli.threads, None)?, || run_check(a))?,
    }
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn cli_main<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
