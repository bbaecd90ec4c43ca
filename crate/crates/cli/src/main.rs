//! `ionkink` command-line front end.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use ionkink::error::ErrorFamily;
use serde_json::json;

use crate::commands::Outputs;
use crate::config::Config;

const FORMAT_VERSION: u32 = 1;
const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (output format 1)");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Core(#[from] ionkink::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        let family = match self {
            CliError::Config(_) => ErrorFamily::Config,
            CliError::Io(_) => ErrorFamily::Io,
            CliError::Core(e) => e.family(),
        };
        match family {
            ErrorFamily::Config => 2,
            ErrorFamily::Physics => 3,
            ErrorFamily::Io => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ionkink", version = VERSION, about = "Kink defects in ion Coulomb crystals")]
struct Cli {
    /// Threads for trial and grid parallelism (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// TOML configuration file, or a previous run's manifest.json; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set trap.anisotropy=1.1`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long, short, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Equilibrium positions of the ground state or centered kink.
    Relax,
    /// Normal-mode spectrum and the localized kink mode.
    Modes,
    /// Crystallization statistics from repeated quenches.
    Quench,
    /// Effective potential profile of a kink for one ion number.
    Pn,
    /// Barrier height versus ion number with a quadratic fit.
    Sweep,
    /// Synthetic fluorescence frame of a thermal crystal.
    Render,
    /// Localized-mode frequency versus trap anisotropy.
    Tune,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Relax => "relax",
            Command::Modes => "modes",
            Command::Quench => "quench",
            Command::Pn => "pn",
            Command::Sweep => "sweep",
            Command::Render => "render",
            Command::Tune => "tune",
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let text = match &cli.config {
        Some(p) => {
            let raw = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            if p.extension().is_some_and(|e| e == "json") { Some(config_from_manifest(&raw)?) } else { Some(raw) }
        }
        None => None,
    };
    let cfg = Config::load(text.as_deref(), &cli.overrides)?;
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::Config("--workers must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(w).build_global().map_err(|e| CliError::Config(e.to_string()))?;
    }
    let started = Instant::now();
    let mut out = Outputs::new(&cli.out)?;
    out.write("resolved_config.toml", cfg.to_toml()?.as_bytes())?;
    let result = match cli.command {
        Command::Relax => commands::relax(&cfg, &mut out),
        Command::Modes => commands::modes(&cfg, &mut out),
        Command::Quench => commands::quench(&cfg, &mut out),
        Command::Pn => commands::pn(&cfg, &mut out),
        Command::Sweep => commands::sweep(&cfg, &mut out),
        Command::Render => commands::render(&cfg, &mut out),
        Command::Tune => commands::tune(&cfg, &mut out),
    };
    let manifest = json!({
        "command": cli.command.name(),
        "artifact_version": env!("CARGO_PKG_VERSION"),
        "format_version": FORMAT_VERSION,
        "seed": cfg.run.seed,
        "workers": cli.workers,
        "config": cfg,
        "status": match &result { Ok(()) => "ok".to_string(), Err(e) => e.to_string() },
        "outputs": out.records,
        "timing": { "wall_seconds": started.elapsed().as_secs_f64() },
    });
    let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(ionkink::Error::from)?;
    bytes.push(b'\n');
    std::fs::write(cli.out.join("manifest.json"), bytes)?;
    result
}

/// Resolved configuration recorded in a previous run's `manifest.json`, as TOML.
fn config_from_manifest(raw: &str) -> Result<String, CliError> {
    let mut manifest: serde_json::Value = serde_json::from_str(raw).map_err(|e| CliError::Config(format!("manifest: {e}")))?;
    let cfg: Config = serde_json::from_value(manifest["config"].take()).map_err(|e| CliError::Config(format!("manifest config: {e}")))?;
    cfg.to_toml()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ionkink {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code())
        }
    }
}
