//! Command-line front end: run experiment configs, validate them, summarize
//! result bundles, and list the bundled recipes.
//!
//! Exit codes: 0 on success, 1 for physics or statistics failures during a
//! run, 2 for configuration and I/O problems.

use clap::{Parser, Subcommand};
use microshift::config::ExperimentConfig;
use microshift::error::{Error, Result};
use microshift::experiments::{report_bundle, run_experiment};
use microshift::recipes;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "microshift",
    version,
    about = "Digital twin of a microlens-array optical shift register for neutral atoms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its artifact bundle.
    Run {
        /// Path to a TOML experiment config.
        #[arg(long, conflicts_with = "recipe")]
        config: Option<PathBuf>,
        /// Name of a bundled recipe (see `list-recipes`).
        #[arg(long)]
        recipe: Option<String>,
        /// Override the config's random seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory that will hold the bundle (created if needed).
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Worker threads for the particle sweeps (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Parse and validate a config without running anything.
    Validate {
        /// Path to a TOML experiment config.
        #[arg(long, conflicts_with = "recipe")]
        config: Option<PathBuf>,
        /// Name of a bundled recipe.
        #[arg(long)]
        recipe: Option<String>,
    },
    /// Summarize a bundle directory and flag its built-in checks.
    Report {
        /// Bundle directory written by `run`.
        #[arg(long)]
        bundle: PathBuf,
    },
    /// List the bundled recipe configs.
    ListRecipes,
}

fn load_config(config: &Option<PathBuf>, recipe: &Option<String>) -> Result<ExperimentConfig> {
    match (config, recipe) {
        (Some(path), None) => ExperimentConfig::load(path),
        (None, Some(name)) => ExperimentConfig::from_toml(recipes::find(name)?.text),
        _ => Err(Error::Config(
            "pass exactly one of --config or --recipe".into(),
        )),
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            recipe,
            seed,
            out,
            threads,
        } => {
            if let Some(n) = threads {
                if n == 0 {
                    return Err(Error::Config("--threads must be at least 1".into()));
                }
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            }
            let config = load_config(&config, &recipe)?;
            let mut bundle = run_experiment(&config, seed)?;
            bundle.stamp(seed.unwrap_or(config.dynamics.seed));
            let path = bundle.write_atomic(&out, &config.label)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Validate { config, recipe } => {
            let config = load_config(&config, &recipe)?;
            println!("ok: {} ({})", config.label, config.experiment.name());
            Ok(())
        }
        Command::Report { bundle } => {
            print!("{}", report_bundle(&bundle)?);
            Ok(())
        }
        Command::ListRecipes => {
            for recipe in recipes::RECIPES {
                println!("{:<16} {}", recipe.name, recipe.summary);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
