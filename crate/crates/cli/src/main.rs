mod artifact;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use maxent_income::empirical::BodyKind;
use maxent_income::Regime;
use serde::Serialize;

const FILE_SCHEMAS: &str = "\
File schemas:
  grid JSON        {\"levels\": [ε_1, …], \"degeneracies\": [g_1, …], \"bin_width\": w (optional)}
  occupancy JSON   {\"counts\": [a_1, …]}
  income CSV       one column with header \"income\"; lines starting with # are comments
  solver config    JSON object with any of constraint_tol, inner_tol, max_outer,
                   max_inner, beta_min, beta_max, pin_offset

Every JSON artifact carries \"kind\", \"version\", \"seed\" and \"config\"; every CSV
artifact starts with a # line holding the same provenance.

Exit status: 0 success, 1 domain error (infeasible input, guard exceeded,
failed fit), 2 usage or I/O error.

Environment: MAXENT_INCOME_THREADS caps the worker threads; RUST_LOG sets
the log level.";

/// Maximum-entropy income distributions: microstate counts, equilibrium
/// occupancies, ensembles, Pareto tails and two-class fits.
#[derive(Parser)]
#[command(name = "maxent-income", version, after_long_help = FILE_SCHEMAS)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Microstate count of an occupancy: {"log_omega", "exact", ...}.
    Count(CountArgs),
    /// Maximum-entropy occupancy under count and income constraints.
    Solve(SolveArgs),
    /// Uniform draws of allocations (CSV, one allocation per row) or their
    /// occupancy histogram on a grid (JSON).
    Sample(SampleArgs),
    /// Exhaustive enumeration of a small ensemble; occupancy histogram JSON.
    Oracle(OracleArgs),
    /// Preferential-attachment tails.
    #[command(subcommand)]
    Pareto(ParetoCommand),
    /// Two-class (body plus Pareto tail) fit of an income sample.
    Fit(FitArgs),
    /// Flattens a result artifact into CSV columns for plotting.
    ///
    /// solve artifacts give `epsilon,occupancy`; fit artifacts give
    /// `income,empirical_ccdf,body_ccdf,tail_ccdf` (body_ccdf empty at or
    /// above the crossover, tail_ccdf empty below); histogram artifacts give
    /// `occupancy_id,count,occupancy` with ids in descending-count order and
    /// the occupancy written as space-separated counts.
    EmitPlot(EmitPlotArgs),
}

#[derive(Args, Serialize)]
struct CountArgs {
    /// Occupancy JSON.
    #[arg(long)]
    occupancy: PathBuf,
    /// Grid JSON.
    #[arg(long)]
    grid: PathBuf,
    /// perfect or monopolistic.
    #[arg(long)]
    regime: Regime,
    /// Also report the Stirling approximation (perfect regime, every g_k > 1).
    #[arg(long)]
    stirling: bool,
    /// Also count microstates by brute-force enumeration (small instances).
    #[arg(long)]
    oracle: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct SolveArgs {
    /// Grid JSON.
    #[arg(long)]
    grid: PathBuf,
    /// Number of consumers N.
    #[arg(long)]
    n: u64,
    /// Total income Π.
    #[arg(long)]
    pi: f64,
    /// perfect or monopolistic.
    #[arg(long)]
    regime: Regime,
    /// Solver config JSON with tolerance overrides.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Relative tolerance on both constraints.
    #[arg(long)]
    constraint_tol: Option<f64>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum SampleMode {
    /// Uniform on the continuous simplex.
    Continuous,
    /// Uniform over compositions of Π/δ quanta.
    Discrete,
}

#[derive(Args, Serialize)]
struct SampleArgs {
    #[arg(long, value_enum)]
    mode: SampleMode,
    /// Number of consumers N.
    #[arg(long)]
    n: u64,
    /// Total income Π.
    #[arg(long)]
    pi: f64,
    /// Income quantum δ (discrete mode); defaults to 1.
    #[arg(long)]
    quantum: Option<f64>,
    /// Number of draws.
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long)]
    seed: u64,
    /// Grid JSON; when given, writes the occupancy histogram instead of the
    /// allocations.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct OracleArgs {
    /// Number of consumers N.
    #[arg(long)]
    n: u64,
    /// Total income Π.
    #[arg(long)]
    pi: f64,
    /// Income quantum δ.
    #[arg(long, default_value_t = 1.0)]
    quantum: f64,
    /// Enumerate partitions (indistinguishable consumers) instead of labeled
    /// compositions.
    #[arg(long)]
    unlabeled: bool,
    /// Grid JSON; defaults to levels 0, δ, …, Π with one industry each.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ParetoCommand {
    /// Degree-proportional incomes of a preferential-attachment graph (CSV).
    Generate(ParetoGenerateArgs),
    /// Hill fit with KS-selected threshold: {"gamma","density_exponent","xmin","ks","n_tail"}.
    Fit(ParetoFitArgs),
}

#[derive(Args, Serialize)]
struct ParetoGenerateArgs {
    #[arg(long)]
    nodes: usize,
    /// Edges added per arriving node.
    #[arg(long, default_value_t = 2)]
    m: usize,
    /// Income per unit of degree.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long)]
    seed: u64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct ParetoFitArgs {
    /// Income CSV.
    #[arg(long)]
    input: PathBuf,
    /// Fixed threshold instead of the KS scan.
    #[arg(long)]
    xmin: Option<f64>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct FitArgs {
    /// Income CSV.
    #[arg(long)]
    input: PathBuf,
    /// boltzmann or bose-einstein.
    #[arg(long, default_value = "boltzmann")]
    body: BodyKind,
    /// Grid JSON (required for bose-einstein bodies).
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Seed of the parametric bootstrap.
    #[arg(long)]
    seed: u64,
    /// Bootstrap resamples for the KS bands; 0 disables them.
    #[arg(long, default_value_t = 200)]
    bootstrap: usize,
    /// Also write the plot-data CSV here.
    #[arg(long)]
    plot: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct EmitPlotArgs {
    /// Result artifact JSON.
    #[arg(long)]
    input: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Domain(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Domain(m) => m,
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("MAXENT_INCOME_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|&t| t > 0).ok_or_else(|| {
        CliError::Usage(format!(
            "MAXENT_INCOME_THREADS must be a positive integer, got {raw:?}"
        ))
    })?;
    maxent_income::par::configure_threads(threads).map_err(CliError::Usage)
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Count(a) => commands::count(&a),
        Command::Solve(a) => commands::solve(&a),
        Command::Sample(a) => commands::sample(&a),
        Command::Oracle(a) => commands::oracle(&a),
        Command::Pareto(ParetoCommand::Generate(a)) => commands::pareto_generate(&a),
        Command::Pareto(ParetoCommand::Fit(a)) => commands::pareto_fit(&a),
        Command::Fit(a) => commands::fit(&a),
        Command::EmitPlot(a) => commands::emit_plot(&a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message().replace('\n', " "));
            ExitCode::from(e.code())
        }
    }
}
