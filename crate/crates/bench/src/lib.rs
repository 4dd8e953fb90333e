//! Benchmark harness for dynamic metabolic control: scenario configuration,
//! static baselines, policy training and evaluation, and uncertainty sweeps.

pub mod commands;
pub mod config;
pub mod error;

use clap::{Parser, Subcommand};

pub use commands::{BenchmarkArgs, ReferenceArgs, SimulateArgs, TrainArgs};
pub use config::{ReferenceSpec, ReturnKind, ScenarioConfig};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "metctl", version, about = "Train and benchmark dynamic metabolic control policies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one episode under a constant input or a schedule file.
    Simulate(SimulateArgs),
    /// Train policies and evaluate the best epoch.
    Train(TrainArgs),
    /// Compare static and trained dynamic control across uncertainty levels.
    Benchmark(BenchmarkArgs),
    /// Write the generated enzyme reference of a lactate scenario.
    Reference(ReferenceArgs),
}

/// Executes a parsed command, printing a short summary to stdout.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate(a) => {
            let out = commands::simulate(a)?;
            println!("final product {} g/L, return {} -> {}", out.final_product, out.total_return, out.path.display());
        }
        Command::Train(a) => {
            for o in commands::train(a)? {
                let rmse = o.evaluation.tracking_rmse.map(|r| format!(", tracking RMSE {r}")).unwrap_or_default();
                println!(
                    "level {}: best epoch {} of {} (mean return {}); evaluation final product {} ± {}{rmse} -> {}",
                    commands::level_tag(o.level),
                    o.best_epoch,
                    o.epochs_run,
                    o.best_mean_return,
                    o.evaluation.mean_final_product,
                    o.evaluation.sd_final_product,
                    o.checkpoint.display()
                );
            }
        }
        Command::Benchmark(a) => {
            for r in commands::benchmark(a)? {
                let imp = r.improvement_pct.map(|p| format!("  {p:+.1}%")).unwrap_or_default();
                println!("level {:<6} {}  {:.4} ± {:.4}{imp}", commands::level_tag(r.level), r.scenario, r.mean_final, r.sd_final);
            }
        }
        Command::Reference(a) => {
            let r = commands::reference(a)?;
            println!("{} breakpoints, final E_ref {}", r.times.len(), r.e_ref.last().copied().unwrap_or(0.0));
        }
    }
    Ok(())
}
