use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use saddle_core::amdp::tune_theorem3;
use saddle_core::solvers::{tune_corollary1, tune_theorem1};
use saddle_harness::{gate_summary, gates, parse_config, run_scenario, HarnessError};

/// Benchmark driver for the stabilized saddle-point solvers.
#[derive(Parser)]
#[command(name = "saddle-bench", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the sweep described by a JSON configuration file.
    Run {
        config: PathBuf,
        /// Fail (exit code 3) when the scenario's acceptance property does
        /// not hold.
        #[arg(long)]
        gate: bool,
    },
    /// Run a named acceptance suite ("all" or one gate name).
    Gate {
        /// One of the gate names listed by `gate --list`, or "all".
        #[arg(default_value = "all")]
        suite: String,
        /// List the available gate names and exit.
        #[arg(long)]
        list: bool,
    },
    /// Print the step sizes and stabilization weights a tuning rule yields.
    PrintTuning {
        #[command(subcommand)]
        rule: TuningRule,
    },
}

#[derive(Subcommand)]
enum TuningRule {
    /// eta = 1/(L_M sqrt(T)), rho = 2 eta L_M^2.
    Theorem1 {
        #[arg(long)]
        l_m: f64,
        #[arg(long)]
        horizon: usize,
    },
    /// eta = sqrt(gamma_x gamma_y / (L^2 T)), rho_x = eta L^2/gamma_y,
    /// rho_y = eta L^2/gamma_x.
    Corollary1 {
        #[arg(long)]
        growth: f64,
        #[arg(long, default_value_t = 1.0)]
        gamma_x: f64,
        #[arg(long, default_value_t = 1.0)]
        gamma_y: f64,
        #[arg(long)]
        horizon: usize,
    },
    /// eta_mu = sqrt(log(SA)/(S T)), eta_v = sqrt(SA/T), rho_v = 4 eta_mu.
    Theorem3 {
        #[arg(long)]
        states: usize,
        #[arg(long)]
        actions: usize,
        #[arg(long)]
        horizon: usize,
    },
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { config, gate } => {
            let config = parse_config(&config)?;
            let summary = run_scenario(&config)?;
            for stats in &summary.per_horizon {
                println!(
                    "T={}: mean {} (std err {}, n={})",
                    stats.horizon, stats.mean, stats.std_err, stats.count
                );
            }
            match summary.slope {
                Some((slope, intercept)) => {
                    println!("rate fit: slope {slope:.4}, intercept {intercept:.4}")
                }
                None => println!("rate fit: unavailable"),
            }
            println!("summary written to {}", config.output.join("summary.csv").display());
            if gate {
                match gate_summary(&summary) {
                    Ok(detail) => println!("GATE PASS: {detail}"),
                    Err(detail) => return Err(HarnessError::Gate(detail)),
                }
            }
            Ok(())
        }
        Command::Gate { suite, list } => {
            if list {
                for name in gates::GATE_NAMES {
                    println!("{name}");
                }
                return Ok(());
            }
            let outcomes = gates::run_suite(&suite).ok_or_else(|| {
                HarnessError::Config(format!(
                    "unknown suite '{suite}'; available: all, {}",
                    gates::GATE_NAMES.join(", ")
                ))
            })?;
            let mut failed = 0usize;
            for outcome in &outcomes {
                println!("{}", outcome.report_line());
                if !outcome.passed {
                    failed += 1;
                }
            }
            if failed > 0 {
                return Err(HarnessError::Gate(format!(
                    "{failed}/{} gates failed",
                    outcomes.len()
                )));
            }
            println!("all {} gates passed", outcomes.len());
            Ok(())
        }
        Command::PrintTuning { rule } => {
            match rule {
                TuningRule::Theorem1 { l_m, horizon } => {
                    let f = tune_theorem1(l_m, horizon)?;
                    println!(
                        "{{\"eta_x\": {}, \"eta_y\": {}, \"rho_x\": {}, \"rho_y\": {}}}",
                        f.eta_x, f.eta_y, f.rho_x, f.rho_y
                    );
                }
                TuningRule::Corollary1 {
                    growth,
                    gamma_x,
                    gamma_y,
                    horizon,
                } => {
                    let f = tune_corollary1(growth, gamma_x, gamma_y, horizon)?;
                    println!(
                        "{{\"eta_x\": {}, \"eta_y\": {}, \"rho_x\": {}, \"rho_y\": {}}}",
                        f.eta_x, f.eta_y, f.rho_x, f.rho_y
                    );
                }
                TuningRule::Theorem3 {
                    states,
                    actions,
                    horizon,
                } => {
                    let f = tune_theorem3(states, actions, horizon)?;
                    println!(
                        "{{\"eta_mu\": {}, \"eta_v\": {}, \"rho_v\": {}}}",
                        f.eta_mu, f.eta_v, f.rho_v
                    );
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
