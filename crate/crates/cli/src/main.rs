//! `quenchcorr`: runs the correlation-length experiments from a TOML file or
//! a named preset and writes CSV, plot data and JSON summaries.

mod config;
mod presets;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Diagnostic, ExperimentConfig};

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_IO: u8 = 1;

#[derive(Parser, Debug)]
#[command(name = "quenchcorr", version, about = "Quenched-disorder correlation lengths in quantum spin chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run an experiment and write its artifacts.
    Run(Source),
    /// Check a configuration without running it.
    Validate(Source),
    /// Print the effective configuration as TOML.
    Show(Source),
    /// List the built-in presets.
    Presets,
}

#[derive(Args, Debug)]
struct Source {
    /// TOML configuration file.
    #[arg(long, env = "QUENCHCORR_CONFIG", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset name (see `quenchcorr presets`).
    #[arg(long, env = "QUENCHCORR_PRESET")]
    preset: Option<String>,
    /// Master seed override.
    #[arg(long, env = "QUENCHCORR_SEED")]
    seed: Option<u64>,
    /// Number of disorder realizations.
    #[arg(long, env = "QUENCHCORR_REALIZATIONS", allow_negative_numbers = true)]
    realizations: Option<i64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, env = "QUENCHCORR_WORKERS")]
    workers: Option<usize>,
    /// Output directory; defaults to `out/<name>`.
    #[arg(long, env = "QUENCHCORR_OUT")]
    out: Option<PathBuf>,
}

fn report(diags: &[Diagnostic]) {
    for d in diags {
        eprintln!("error: {d}");
    }
}

fn single(field: &str, message: impl Into<String>) -> Vec<Diagnostic> {
    vec![Diagnostic { field: field.into(), message: message.into() }]
}

/// Loads the configuration and applies command-line overrides.
fn load(src: &Source) -> Result<ExperimentConfig, Vec<Diagnostic>> {
    let mut cfg = match (&src.config, &src.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| single("config", format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::from_toml(&text).map_err(|e| single("config", e.trim_end().to_string()))?
        }
        (None, Some(name)) => presets::preset(name).ok_or_else(|| {
            single("preset", format!("unknown preset {name:?}; known: {}", presets::NAMES.join(", ")))
        })?,
        (None, None) => return Err(single("config", "pass --config PATH or --preset NAME")),
    };
    if let Some(seed) = src.seed {
        cfg.run.seed = seed;
    }
    if let Some(r) = src.realizations {
        cfg.run.realizations =
            u64::try_from(r).map_err(|_| single("run.realizations", format!("{r} is negative")))?;
    }
    if src.workers == Some(0) {
        return Err(single("workers", "at least one worker is required"));
    }
    let diags = cfg.validate();
    if diags.is_empty() {
        Ok(cfg)
    } else {
        Err(diags)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let src = match &cli.command {
        Command::Presets => {
            for name in presets::NAMES {
                println!("{name}");
            }
            return ExitCode::SUCCESS;
        }
        Command::Run(s) | Command::Validate(s) | Command::Show(s) => s,
    };
    let cfg = match load(src) {
        Ok(cfg) => cfg,
        Err(diags) => {
            report(&diags);
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match cli.command {
        Command::Validate(_) => {
            println!("{}: ok", cfg.name);
            ExitCode::SUCCESS
        }
        Command::Show(_) => {
            print!("{}", cfg.to_toml());
            ExitCode::SUCCESS
        }
        Command::Run(_) => {
            let workers = src
                .workers
                .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
            let out = src.out.clone().unwrap_or_else(|| PathBuf::from("out").join(&cfg.name));
            let artifacts = match runner::run(&cfg, workers) {
                Ok(a) => a,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_SOLVER);
                }
            };
            if let Err(e) = artifacts.write_to(&out) {
                eprintln!("error: writing {}: {e}", out.display());
                return ExitCode::from(EXIT_IO);
            }
            log::info!("wrote {} files to {}", artifacts.files.len(), out.display());
            ExitCode::SUCCESS
        }
        Command::Presets => unreachable!("handled above"),
    }
}
