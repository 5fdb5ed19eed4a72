//! `pooldesign`: build pooling designs, decode pooled readouts and run
//! recovery simulations.
//!
//! Exit codes: 0 success, 1 I/O or other failure, 2 invalid parameters
//! (including usage errors), 3 design invariant violated, 4 dimension
//! mismatch between design and measurements.

mod commands;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "pooldesign", version, about = "Pooled testing with circulant designs and NNLAD decoding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a design and write it as JSON: {"q","s","m","n","ones":[[row,col],...]}.
    Design(DesignArgs),
    /// Check a design file's structure and print its recovery certificate.
    Verify(VerifyArgs),
    /// Write the lab sheet CSV (test_id,specimen_ids) for a design.
    Pools(PoolsArgs),
    /// Decode a measurement CSV (test_id,value) into infection calls (JSON).
    Decode(DecodeArgs),
    /// Compare tests per individual against Dorfman pooling and the disjunct bound.
    Budget(BudgetArgs),
    /// Run the recovery phase diagram and write the grid CSV (p,pe,trials,successes,prob).
    Simulate(SimulateArgs),
    /// Render a grid CSV as an SVG heatmap.
    Heatmap(HeatmapArgs),
}

#[derive(Args, Debug)]
struct DesignArgs {
    /// Pool size (prime).
    #[arg(long, requires = "s", conflicts_with_all = ["people", "prevalence"])]
    q: Option<u64>,
    /// Guaranteed number of infected individuals (s < q).
    #[arg(long, requires = "q")]
    s: Option<u64>,
    /// Population size; sizes the design together with --prevalence.
    #[arg(long, requires = "prevalence")]
    people: Option<u64>,
    /// Expected prevalence in (0, 1).
    #[arg(long, requires = "people")]
    prevalence: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long)]
    design: PathBuf,
    /// Also run the exhaustive s-disjunctness check.
    #[arg(long)]
    check_disjunct: bool,
    /// Work budget (set operations) for the disjunctness check.
    #[arg(long, default_value_t = pooldesign::design::DEFAULT_DISJUNCT_BUDGET)]
    budget: f64,
    /// Run the disjunctness check even above the budget.
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct PoolsArgs {
    #[arg(long)]
    design: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SolverArgs {
    /// Relative optimality tolerance (scaled by ||y||_1, floor 1e-8).
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 50_000)]
    max_iters: usize,
}

impl SolverArgs {
    fn options(&self) -> pooldesign::SolverOptions {
        pooldesign::SolverOptions { tol_rel: self.tol, max_iters: self.max_iters, ..Default::default() }
    }
}

#[derive(Args, Debug)]
struct DecodeArgs {
    #[arg(long)]
    design: PathBuf,
    #[arg(long)]
    measurements: PathBuf,
    /// Virus count above which a person counts as infected; calls use epsilon / 2.
    #[arg(long, default_value_t = pooldesign::ThresholdPolicy::DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    /// Reserved; decoding is deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct BudgetArgs {
    #[arg(long)]
    people: u64,
    #[arg(long)]
    prevalence: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Corruption {
    ZeroOut,
    ReplaceRandom,
    Mixed,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, default_value_t = 31)]
    q: u64,
    #[arg(long, default_value_t = 7)]
    s: u64,
    /// Prevalence grid: "start:stop:step" (inclusive) or a comma list.
    #[arg(long, default_value = "0:0.12:0.005")]
    p_grid: String,
    /// Corruption-fraction grid, same syntax as --p-grid.
    #[arg(long, default_value = "0:0.1:0.005")]
    pe_grid: String,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// Required: all randomness derives from this seed.
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Success iff ||x# - x||_1 <= tol * max(1, ||x||_1).
    #[arg(long, default_value_t = 1e-3)]
    success_tol: f64,
    /// Mean viral load of an infected specimen.
    #[arg(long, default_value_t = 100.0)]
    mean: f64,
    #[arg(long, value_enum, default_value_t = Corruption::Mixed)]
    corruption: Corruption,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug)]
struct HeatmapArgs {
    #[arg(long)]
    grid: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    commands::configure_threads();
    let result = match cli.command {
        Command::Design(a) => commands::design(a),
        Command::Verify(a) => commands::verify(a),
        Command::Pools(a) => commands::pools(a),
        Command::Decode(a) => commands::decode(a),
        Command::Budget(a) => commands::budget(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Heatmap(a) => commands::heatmap(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            ExitCode::from(e.code)
        }
    }
}
