//! Command-line front end for the `wigner-pdc` simulator.
//!
//! Every run reads a strict dotted-key config, validates it completely,
//! computes its reports in memory and only then writes them, together with a
//! manifest that reproduces the run when passed back as `--config`.

pub mod config;
pub mod output;
pub mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::config::{Diagnostic, ManifestInfo, RunConfig, Severity};
use crate::output::Outputs;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("validation failed:\n{}", .0.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n"))]
    Validation(Vec<Diagnostic>),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "wpdc",
    version,
    about = "Wigner-representation parametric down conversion simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Config file with dotted keys such as `grid.n_pairs = 32`.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Override one config key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Master seed, overriding `ensemble.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for Monte Carlo reductions.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Check the config without computing anything.
    Validate,
    /// Monte Carlo vs analytic correlation functions.
    Correlate,
    /// Singles and coincidence rates under both detection models.
    Detect,
    /// Angle scan plus CHSH and Clauser-Horne report.
    Bell,
    /// Angle scan with the configured engine.
    Scan,
    /// Write the mode lattice.
    DumpGrid,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Correlate => "correlate",
            Command::Detect => "detect",
            Command::Bell => "bell",
            Command::Scan => "scan",
            Command::DumpGrid => "dump-grid",
        }
    }
}

/// Resolved config: file, then `--set` overrides, then dedicated flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = config::load(cli.config.as_deref(), &cli.overrides)?;
    if let Some(seed) = cli.seed {
        cfg.ensemble.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.display().to_string();
    }
    cfg.manifest = None;
    Ok(cfg)
}

fn manifest(cfg: &RunConfig, command: Command, wall_time_s: f64) -> Vec<u8> {
    let mut with_info = cfg.clone();
    with_info.manifest = Some(ManifestInfo {
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.name().to_string(),
        workers: rayon::current_num_threads(),
        wall_time_s,
    });
    with_info.to_dotted().into_bytes()
}

/// Runs one command; diagnostics and progress go to `log`.
pub fn run(cli: &Cli, log: &mut dyn std::io::Write) -> Result<(), CliError> {
    let cfg = resolve_config(cli)?;

    if cli.command == Command::Validate {
        let diags = config::validate(&cfg);
        if diags.iter().any(|d| d.severity == Severity::Error) {
            return Err(CliError::Validation(diags));
        }
        for d in &diags {
            let _ = writeln!(log, "{d}");
        }
        return Ok(());
    }

    for d in config::validate(&cfg) {
        let _ = writeln!(log, "{d}");
    }
    let pool = match cli.workers {
        Some(0) => return Err(CliError::Config("--workers must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    }
    .map_err(|e| CliError::Runtime(e.to_string()))?;

    let started = Instant::now();
    let outputs: Outputs = pool.install(|| match cli.command {
        Command::Correlate => pipeline::correlate(&cfg),
        Command::Detect => pipeline::detect(&cfg),
        Command::Bell => pipeline::bell(&cfg),
        Command::Scan => pipeline::scan(&cfg),
        Command::DumpGrid => pipeline::dump_grid(&cfg),
        Command::Validate => unreachable!("handled above"),
    })?;
    let elapsed = started.elapsed().as_secs_f64();

    let mut outputs = outputs;
    let manifest = pool.install(|| manifest(&cfg, cli.command, elapsed));
    outputs.add("manifest.toml", manifest);
    let dir = PathBuf::from(&cfg.output.dir);
    let names: Vec<String> = outputs.names().map(str::to_string).collect();
    outputs.commit(&dir)?;
    for n in names {
        let _ = writeln!(log, "wrote {}", dir.join(n).display());
    }
    Ok(())
}

/// Entry point used by the binary.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let mut stderr = std::io::stderr();
    match run(&cli, &mut stderr) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
