//! `kauction`: generate scenarios, run the iterative auction, solve for
//! equilibria and sweep the aggregator's parameters.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kelly_auction::AuctionError;

#[derive(Debug, Parser)]
#[command(name = "kauction", version, about = "Proportional-allocation double auction simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a random valid scenario and write it as JSON.
    Gen(GenArgs),
    /// Run the iterative auction and write its per-round trace as CSV.
    Run(Shared),
    /// Solve for the equilibrium directly and print it as JSON.
    Solve(Shared),
    /// Price-taking equilibria across surcharges from 0 to the zero-trade bound.
    SweepSurcharge(SweepArgs),
    /// Price-anticipating equilibria across log-spaced virtual availabilities.
    SweepVirtual(SweepArgs),
    /// Aggregate demand D(p) and availability A(p) on a price grid.
    Curves(CurvesArgs),
    /// Welfare under price taking and price anticipation for the reference templates.
    Compare(Shared),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Pt,
    Pa,
}

/// Flags common to every command. Each command reads the ones it needs.
#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct Shared {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Output file; most commands print to stdout without it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for scenario generation.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = ModeArg::Pt)]
    mode: ModeArg,
    /// Virtual availability; overrides the scenario file.
    #[arg(long)]
    a0: Option<f64>,
    /// Surcharge; overrides the scenario file.
    #[arg(long)]
    ps: Option<f64>,
    /// Damping weight of the posted-price update, in (0, 1].
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Price and bid tolerance of the stopping rule.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[command(flatten)]
    shared: Shared,
    /// Use the k-th reference template (0 to 4) for the market size.
    #[arg(long, conflicts_with_all = ["buyers", "sellers"])]
    template: Option<usize>,
    #[arg(long, default_value_t = 2)]
    buyers: usize,
    #[arg(long, default_value_t = 3)]
    sellers: usize,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    shared: Shared,
    #[arg(long, default_value_t = 100)]
    points: usize,
    /// Smallest virtual availability, as a multiple of total generation.
    #[arg(long, default_value_t = 1e-2)]
    min_factor: f64,
    /// Largest virtual availability, as a multiple of total generation.
    #[arg(long, default_value_t = 1e4)]
    max_factor: f64,
}

#[derive(Debug, Args)]
struct CurvesArgs {
    #[command(flatten)]
    shared: Shared,
    #[arg(long, default_value_t = 1000)]
    points: usize,
}

/// Outcome of a command that ran to completion.
pub enum Status {
    Ok,
    NotConverged,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<AuctionError>()) {
        Some(AuctionError::Io(_)) | Some(AuctionError::Csv(_)) => 1,
        Some(_) => 2,
        None if err.chain().any(|e| e.is::<std::io::Error>()) => 1,
        None => 2,
    }
}

/// The error chain joined by `: `, skipping causes whose text the previous
/// message already ends with.
fn render(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !out.ends_with(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => commands::generate(&a),
        Command::Run(a) => commands::run(&a),
        Command::Solve(a) => commands::solve(&a),
        Command::SweepSurcharge(a) => commands::sweep_surcharge(&a),
        Command::SweepVirtual(a) => commands::sweep_virtual(&a),
        Command::Curves(a) => commands::curves(&a),
        Command::Compare(a) => commands::compare(&a),
    };
    match result {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::NotConverged) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {}", render(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
