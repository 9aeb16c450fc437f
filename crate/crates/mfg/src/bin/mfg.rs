//! Command-line runner for the fictitious-play solvers.

use clap::{Args, Parser, Subcommand, ValueEnum};
use mfg::runner::{execute_run, run_report, RunKind, RunOverrides, RunSummary};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "mfg",
    version,
    about = "Fictitious-play solvers for discrete-time mean field games"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fictitious play with the exact dynamic-programming best response.
    ExactFp(RunArgs),
    /// Fictitious play with an approximate best response (perturbed DP or
    /// Q-learning, per the config's `solver` key).
    ApproxFp(RunArgs),
    /// Model-free fictitious play: stationary Q-learning responses with a
    /// density estimated from simulated trajectories.
    ModelfreeFp(RunArgs),
    /// Post-process a finished benchmark run into figure-panel CSVs and a
    /// fitted error-bound report.
    Report(ReportArgs),
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Args)]
struct RunArgs {
    /// Config file (flat `key = value` lines; unknown keys are rejected).
    #[arg(long)]
    config: PathBuf,
    /// Directory for trace.csv, final_flow.csv, final_policy.csv, and
    /// manifest.txt; created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's diagnostics switch (solver-quality columns).
    #[arg(long)]
    diagnostics: Option<Switch>,
    /// Override the config's desk_scale divisor for trajectory budgets
    /// (1 = full scale).
    #[arg(long)]
    scale: Option<f64>,
}

#[derive(Args)]
struct ReportArgs {
    /// A finished run directory; report files are written next to it.
    #[arg(long)]
    out: PathBuf,
}

fn run(kind: RunKind, args: &RunArgs) -> mfg::Result<RunSummary> {
    let overrides = RunOverrides {
        seed: args.seed,
        diagnostics: args.diagnostics.map(|d| d == Switch::On),
        scale: args.scale,
    };
    execute_run(kind, &args.config, &args.out, &overrides)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::ExactFp(args) => run(RunKind::Exact, args).map(print_run_summary),
        Command::ApproxFp(args) => run(RunKind::Approximate, args).map(print_run_summary),
        Command::ModelfreeFp(args) => run(RunKind::ModelFree, args).map(print_run_summary),
        Command::Report(args) => run_report(&args.out).map(|summary| {
            println!(
                "report written to {}: {}",
                args.out.display(),
                summary.files.join(", ")
            );
            println!(
                "l2 density by iteration: first {:.6e}, final {:.6e}, ratio {:.4}",
                summary.l2_density_first, summary.l2_density_final, summary.l2_density_ratio
            );
            match summary.bounds_hold_on_holdout {
                Some(holds) => println!("fitted bounds hold on holdout: {holds}"),
                None => println!("bound fitting unavailable (no diagnostic trace)"),
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn print_run_summary(summary: RunSummary) {
    println!(
        "{} iterations in {} ms; outputs in {}: {}",
        summary.iterations,
        summary.duration_ms,
        summary.out_dir.display(),
        summary.files.join(", ")
    );
    match summary.final_exploitability {
        Some(e) => println!(
            "final exploitability {e:.6e} (approximate part {:.6e})",
            summary.final_approx_exploitability
        ),
        None => println!(
            "final approximate exploitability {:.6e} (diagnostics off)",
            summary.final_approx_exploitability
        ),
    }
    if let Some(l2) = summary.final_l2_density {
        println!("final l2 density error vs closed form {l2:.6e}");
    }
}
