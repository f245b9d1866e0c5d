//! `cylevy` — reproducible experiment runner.
//!
//! Exit codes: `0` success, `1` runtime failure, `2` unparseable config or bad usage,
//! `3` unknown scenario, `4` config validation failure. Errors print one line on
//! stderr; a successful run prints its summary as one JSON line on stdout.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};

use cylevy_cli::config::{self, ExperimentConfig};
use cylevy_cli::error::CliError;
use cylevy_cli::runner::{self, Command as RunCommand};
use cylevy_cli::scenarios;

#[derive(Parser)]
#[command(
    name = "cylevy",
    version,
    about = "Experiment runner for stochastic evolution equations with jump noise"
)]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Subcommand)]
enum CliCommand {
    /// Compare sampled noise increments against the model characteristic function.
    NoiseCheck(RunArgs),
    /// Verify exact pathwise calculus identities on random step-process integrals.
    CalculusCheck(RunArgs),
    /// Estimate path-space distances between the adaptive and fixed-point solvers.
    Metrics(RunArgs),
    /// Run the adaptive solver across seeds and record residuals and update times.
    Solve(RunArgs),
    /// Distance of the adaptive path to the fixed point across a budget schedule.
    Converge(RunArgs),
    /// Cross-check two solver routes path by path (fixed-point uniqueness).
    Uniqueness(RunArgs),
    /// Log-supremum inequality battery plus the damped feedback decay experiment.
    Gronwall(RunArgs),
    /// List shipped scenarios with one-line descriptions.
    ListScenarios,
}

#[derive(Args)]
#[command(group(ArgGroup::new("source").required(true).args(["config", "scenario"])))]
struct RunArgs {
    /// Path to a TOML experiment config.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Run a shipped scenario with its default config (see `list-scenarios`).
    #[arg(long, value_name = "NAME")]
    scenario: Option<String>,
    /// Override the config's seed_base.
    #[arg(long, value_name = "INT")]
    seed: Option<u64>,
    /// Override the config's output_dir.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override the config's n_paths.
    #[arg(long, value_name = "INT")]
    paths: Option<usize>,
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config::parse_toml(&text)?
    } else if let Some(name) = &args.scenario {
        scenarios::default_config(name)
            .ok_or_else(|| CliError::UnknownScenario(name.clone()))?
    } else {
        unreachable!("clap requires exactly one of --config/--scenario")
    };
    if let Some(seed) = args.seed {
        cfg.seed_base = seed;
    }
    if let Some(paths) = args.paths {
        cfg.n_paths = paths;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.display().to_string();
    }
    if !scenarios::exists(&cfg.scenario) {
        return Err(CliError::UnknownScenario(cfg.scenario.clone()));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(cmd: RunCommand, args: &RunArgs) -> Result<(), CliError> {
    let cfg = load_config(args)?;
    let output = runner::execute(cmd, &cfg)?;
    let summary = runner::write_run(Path::new(&cfg.output_dir), cmd, &cfg, output)?;
    let line = serde_json::to_string(&summary)
        .map_err(|e| CliError::Runtime(format!("serializing summary: {e}")))?;
    println!("{line}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        CliCommand::NoiseCheck(args) => dispatch(RunCommand::NoiseCheck, args),
        CliCommand::CalculusCheck(args) => dispatch(RunCommand::CalculusCheck, args),
        CliCommand::Metrics(args) => dispatch(RunCommand::Metrics, args),
        CliCommand::Solve(args) => dispatch(RunCommand::Solve, args),
        CliCommand::Converge(args) => dispatch(RunCommand::Converge, args),
        CliCommand::Uniqueness(args) => dispatch(RunCommand::Uniqueness, args),
        CliCommand::Gronwall(args) => dispatch(RunCommand::Gronwall, args),
        CliCommand::ListScenarios => {
            for s in scenarios::SCENARIOS {
                println!("{:<24} {}", s.name, s.description);
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
