//! `romcp`: batch pipeline that generates synthetic coalescence data, fits
//! reduced-order models, calibrates conformal prediction sets and reports
//! their coverage and size.
//!
//! Stages run separately and communicate only through files under the
//! output directory; every artifact embeds the configuration that produced
//! it and the hashes of its inputs, and later stages refuse stale inputs.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod report;
pub mod stages;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use artifacts::Layout;
pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "romcp", version, about = "Conformal uncertainty quantification for reduced-order models")]
pub struct Cli {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads for fold training and residuals (0 = all cores).
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
    /// Overrides the configured output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Simulate the synthetic dataset.
    Generate,
    /// Fit one ROM per CP method (plus fold models for CV+).
    Train,
    /// Calibrate prediction sets for every method, target and alpha.
    Calibrate,
    /// Measure coverage and prediction-set size on held-out data.
    Evaluate {
        /// Evaluate on each calibration's own samples instead of the test
        /// set (a recount check; meaningful for vanilla CP).
        #[arg(long)]
        test_on_calibration: bool,
    },
    /// Write the coverage tables.
    Report,
    /// Run generate, train, calibrate, evaluate and report in order.
    All,
}

fn init_logging() {
    let env = env_logger::Env::default().default_filter_or("info");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Resolves the configuration file and command-line overrides.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve_config(cli)?;
    let layout = Layout::new(&cfg.out_dir);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Generate => stages::generate(&cfg, &layout),
        Command::Train => stages::train(&cfg, &layout),
        Command::Calibrate => stages::calibrate_all(&cfg, &layout),
        Command::Evaluate { test_on_calibration } => stages::evaluate(&cfg, &layout, *test_on_calibration),
        Command::Report => stages::report(&cfg, &layout),
        Command::All => {
            stages::generate(&cfg, &layout)?;
            stages::train(&cfg, &layout)?;
            stages::calibrate_all(&cfg, &layout)?;
            stages::evaluate(&cfg, &layout, false)?;
            stages::report(&cfg, &layout)
        }
    })
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("romcp: {e}");
            e.exit_code()
        }
    }
}
