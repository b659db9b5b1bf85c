//! Command-line driver for the `weakmeter` simulator.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod config;
pub mod modes;
pub mod output;

use std::path::PathBuf;

use clap::Parser;

use config::{parse_basis, parse_list, parse_noise, ExperimentConfig, Mode, Settings};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("output error: {0}")]
    Io(String),
    #[error("numeric failure: {0}")]
    Numeric(weakmeter::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<weakmeter::Error> for CliError {
    fn from(e: weakmeter::Error) -> Self {
        use weakmeter::Error as E;
        match e {
            E::DimensionMismatch { .. }
            | E::ZeroVector
            | E::DimensionTooSmall(_)
            | E::NotHermitian { .. }
            | E::DegeneratePostselection { .. }
            | E::InvalidParameter { .. }
            | E::Unsupported(_) => CliError::Config(e.to_string()),
            _ => CliError::Numeric(e),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Postselected weak-measurement simulator with technical preparation noise.
#[derive(Debug, Parser)]
#[command(name = "weakmeter", version)]
pub struct Cli {
    /// distribution | snr-curve | montecarlo | validity | backaction
    pub mode: Option<Mode>,
    /// Flat `key = value` config file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV output path (standard output when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Selects the built-in qubit example with weak value i·w.
    #[arg(long, allow_hyphen_values = true)]
    pub w: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub k: Option<f64>,
    /// Meter Q-width.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Total P width, overriding delta and noise (distribution mode).
    #[arg(long = "delta-t")]
    pub delta_t: Option<f64>,
    /// none | q:WIDTH | p:WIDTH
    #[arg(long, value_parser = parse_noise)]
    pub noise: Option<weakmeter::meter::NoiseModel>,
    /// Meter readout basis, q or p.
    #[arg(long, value_parser = parse_basis)]
    pub readout: Option<weakmeter::meter::Basis>,
    /// Comma-separated noise widths (p0 values in backaction mode).
    #[arg(long, allow_hyphen_values = true)]
    pub sweep: Option<String>,
    #[arg(long)]
    pub runs: Option<u64>,
    #[arg(long = "grid-points")]
    pub grid_points: Option<usize>,
    #[arg(long = "grid-half-width")]
    pub grid_half_width: Option<f64>,
    /// Gauss-Hermite nodes for the noise average.
    #[arg(long = "quad-points")]
    pub quad_points: Option<usize>,
    /// Fixed meter momentum of the backaction protocol.
    #[arg(long, allow_hyphen_values = true)]
    pub p0: Option<f64>,
    /// Largest validity_lhs reported as inside the weak-value regime.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

impl Cli {
    fn settings(&self) -> Result<Settings, CliError> {
        Ok(Settings {
            mode: self.mode,
            out: self.out.clone(),
            seed: self.seed,
            w: self.w,
            k: self.k,
            delta: self.delta,
            delta_t: self.delta_t,
            noise: self.noise,
            readout: self.readout,
            sweep: self.sweep.as_deref().map(parse_list).transpose()?,
            runs: self.runs,
            grid_points: self.grid_points,
            grid_half_width: self.grid_half_width,
            quad_points: self.quad_points,
            p0: self.p0,
            threshold: self.threshold,
            threads: self.threads,
            ..Default::default()
        })
    }

    pub fn experiment(&self) -> Result<ExperimentConfig, CliError> {
        let file = match &self.config {
            Some(path) => Settings::from_file(path)?,
            None => Settings::default(),
        };
        ExperimentConfig::from_settings(file.overlay(self.settings()?))
    }
}

pub struct Outcome {
    pub summary: Vec<String>,
    /// Whether the CSV went to a file rather than standard output.
    pub wrote_file: bool,
}

/// Runs one invocation.
pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let config = cli.experiment()?;
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = config.threads {
            b = b.num_threads(n);
        }
        b.build().map_err(|e| CliError::Config(e.to_string()))?
    };
    let table = pool.install(|| modes::execute(&config))?;
    match &config.out {
        Some(path) => {
            let file = std::fs::File::create(path)
                .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
            table.write_csv(file)?;
        }
        None => table.write_csv(std::io::stdout().lock())?,
    }
    Ok(Outcome {
        summary: table.summary,
        wrote_file: config.out.is_some(),
    })
}
