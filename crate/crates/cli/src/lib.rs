//! Batch front end: synthesize degraded measurements, restore them, compare
//! ablations, run the theorem suite and gather reports.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod report;
pub mod verify;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::{parse_seed_list, RunConfig};
use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "nfc", version, about = "Noise-frequency continuation posterior sampler")]
pub struct Cli {
    /// JSON run configuration, or a manifest written by `degrade`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seeds such as `0,3,7` or `0..10`.
    #[arg(long, global = true)]
    pub seed_list: Option<String>,
    /// Output directory [default: nfc-out].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Save the fused estimate every this many outer steps.
    #[arg(long, global = true)]
    pub dump_stride: Option<usize>,
    /// Worker threads; NFC_DETERMINISTIC=1 forces one.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize y = A x + σ_y ε for every seed.
    Degrade {
        /// Override the measurement noise level.
        #[arg(long)]
        sigma_y: Option<f64>,
    },
    /// Run the sampler on degraded measurements.
    Restore,
    /// Run nfc, full_band and no_haar_fusion on the same measurements.
    Ablate,
    /// Run the theorem suite; exit 1 if any check fails.
    Verify {
        /// Tolerance override, `name=value`; repeatable.
        #[arg(long = "tol", value_parser = parse_tolerance)]
        tolerances: Vec<(String, f64)>,
    },
    /// Gather summaries and the resolved schedule into one report.
    Report,
}

fn parse_tolerance(s: &str) -> std::result::Result<(String, f64), String> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let value: f64 = value.trim().parse().map_err(|e| format!("`{value}`: {e}"))?;
    Ok((name.trim().to_string(), value))
}

impl Cli {
    /// The config file (or defaults) with command-line overrides applied.
    pub fn resolve_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(s) = &self.seed_list {
            cfg.seeds = parse_seed_list(s)?;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        if let Some(stride) = self.dump_stride {
            cfg.dump_stride = stride;
        }
        if let Command::Degrade { sigma_y: Some(s) } = self.command {
            cfg.sigma_y = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn thread_count(&self) -> usize {
        if std::env::var("NFC_DETERMINISTIC").is_ok_and(|v| v == "1") {
            1
        } else {
            self.threads.unwrap_or(0)
        }
    }
}

/// Runs a parsed command and returns the text to print on success.
pub fn execute(cli: &Cli) -> Result<String> {
    let cfg = cli.resolve_config()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.thread_count())
        .build()
        .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Degrade { .. } => {
            let manifests = commands::degrade(&cfg)?;
            Ok(format!(
                "degraded {} seed(s) into {}\n",
                manifests.len(),
                cfg.out.join("degrade").display()
            ))
        }
        Command::Restore => Ok(commands::restore(&cfg)?.to_text()),
        Command::Ablate => Ok(commands::ablate(&cfg)?.to_text()),
        Command::Verify { tolerances } => {
            let reports = verify::verify(&cfg, tolerances)?;
            let text = verify::reports_text(&reports);
            let failing: Vec<_> = reports.iter().filter(|r| !r.passed).collect();
            if failing.is_empty() {
                Ok(text)
            } else {
                print!("{text}");
                eprintln!("{}", serde_json::to_string_pretty(&failing).expect("reports serialize"));
                Err(CliError::VerificationFailed {
                    failed: failing.len(),
                    total: reports.len(),
                })
            }
        }
        Command::Report => Ok(report::report(&cfg)?.to_text()),
    })
}
