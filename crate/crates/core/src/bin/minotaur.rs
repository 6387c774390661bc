use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use minotaur::exp::{prepare_experiment, run_experiment, run_scenario, ExpError, Experiment, Report, ScenarioConfig};

#[derive(Parser, Debug)]
#[command(name = "minotaur", version, about = "Run hybrid PoW/PoS consensus simulations and experiment recipes")]
struct Cli {
    /// Directory for CSV, manifest and violation files.
    #[arg(long, global = true, env = "MINOTAUR_OUT", default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every seed of a TOML scenario with the safety monitors.
    Run {
        config: PathBuf,
        /// Validate the configuration and exit.
        #[arg(long)]
        dry_run: bool,
    },
    /// Run a built-in experiment recipe.
    Experiment {
        name: String,
        /// Override a recipe parameter, e.g. `--set base.kappa=30`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Number of seeds, starting from 0.
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long)]
        dry_run: bool,
    },
    /// List the experiment recipes.
    List,
}

fn finish(report: &Report, out: &Path) -> Result<(), ExpError> {
    let path = report.write(out)?;
    for line in &report.summary {
        println!("{line}");
    }
    println!("wrote {} ({:.1}s)", path.display(), report.elapsed_secs);
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, ExpError> {
    match cli.command {
        Command::List => {
            for e in Experiment::ALL {
                println!("{} (default seeds: {})", e.name(), e.default_seeds());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { config, dry_run } => {
            let text = std::fs::read_to_string(&config).map_err(|e| ExpError::Invalid(format!("{}: {e}", config.display())))?;
            let cfg = ScenarioConfig::from_toml(&text)?;
            if dry_run {
                println!("{}: valid, {} seed(s)", cfg.name, cfg.seeds.len());
                return Ok(ExitCode::SUCCESS);
            }
            let report = run_scenario(&cfg)?;
            finish(&report, &cli.out)?;
            if cfg.monitors.assert && !report.violations.is_empty() {
                eprintln!("{} monitor violation(s)", report.violations.len());
                return Ok(ExitCode::FAILURE);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Experiment { name, overrides, seeds, dry_run } => {
            if dry_run {
                let (exp, params) = prepare_experiment(&name, &overrides)?;
                println!("{}: {}", exp.name(), params);
                return Ok(ExitCode::SUCCESS);
            }
            let report = run_experiment(&name, &overrides, seeds)?;
            finish(&report, &cli.out)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
