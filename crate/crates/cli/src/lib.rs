//! Command-line front end: sweep jobs, CSV and heatmap output.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use remag_core::dynamics::{DynamicsError, Frame};
use remag_core::fit::FitError;
use remag_core::phase::PhaseError;
use remag_core::spectral::SpectralError;
use remag_core::sweep::{linspace, SweepError};
use serde::Serialize;
use thiserror::Error;

pub mod config;
pub mod heatmap;
pub mod jobs;

pub use config::RunConfig;
pub use jobs::{ringdown_sweep, RingdownPoint, RingdownSettings};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<SweepError> for CliError {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::Point { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<PhaseError> for CliError {
    fn from(e: PhaseError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::RequiresSingleBus(_) => CliError::Config(e.to_string()),
            SpectralError::Singular { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<DynamicsError> for CliError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::NonFinite(_) | DynamicsError::SingularMatrix => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        match e {
            FitError::Io(_) => CliError::Io(e.to_string()),
            FitError::Degenerate
            | FitError::NoResonance
            | FitError::SpanTooNarrow { .. }
            | FitError::NonConvergence(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// |S11| over magnon frequency (or field) and probe frequency.
    Spectrum,
    /// |S11| over phase-shifter setting and probe frequency.
    Phasemap,
    /// Pulsed ringdown traces and beat frequencies.
    Ringdown,
    /// Hybrid and full eigenfrequencies.
    Eigen,
    /// Effective permittivity and guided wavelength of the coupling line.
    Microstrip,
    /// Q factors from a measured S11 trace.
    Fit,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Command::Spectrum => "spectrum",
            Command::Phasemap => "phasemap",
            Command::Ringdown => "ringdown",
            Command::Eigen => "eigen",
            Command::Microstrip => "microstrip",
            Command::Fit => "fit",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisKind {
    /// Magnon frequency, MHz.
    Fm,
    /// Bias field, T.
    B,
    /// Phase-shifter setting, degrees.
    Phi,
    /// Probe frequency, MHz.
    F,
}

impl AxisKind {
    pub fn column_name(self) -> &'static str {
        match self {
            AxisKind::Fm => "fm_mhz",
            AxisKind::B => "b_t",
            AxisKind::Phi => "phi_deg",
            AxisKind::F => "probe_f_mhz",
        }
    }
}

/// One `axis=start:stop:count` sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepAxis {
    pub axis: AxisKind,
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl SweepAxis {
    pub fn values(&self) -> Vec<f64> {
        linspace(self.start, self.stop, self.count)
    }
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, range) = s
            .split_once('=')
            .ok_or_else(|| format!("sweep '{s}' is not of the form axis=start:stop:count"))?;
        let axis = match name.trim() {
            "fm" => AxisKind::Fm,
            "b" => AxisKind::B,
            "phi" => AxisKind::Phi,
            "f" => AxisKind::F,
            other => return Err(format!("unknown sweep axis '{other}' (expected fm, b, phi or f)")),
        };
        let parts: Vec<&str> = range.split(':').collect();
        let [start, stop, count] = parts[..] else {
            return Err(format!("sweep '{s}' is not of the form axis=start:stop:count"));
        };
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("bad number '{t}' in sweep '{s}'"))
        };
        let (start, stop) = (num(start)?, num(stop)?);
        let count: usize = count
            .trim()
            .parse()
            .map_err(|_| format!("bad count '{count}' in sweep '{s}'"))?;
        if count == 0 {
            return Err(format!("sweep '{s}': count must be ≥ 1"));
        }
        if start > stop {
            return Err(format!("sweep '{s}': start must be ≤ stop"));
        }
        if count > 1 && start == stop {
            return Err(format!("sweep '{s}': {count} points need start < stop"));
        }
        Ok(Self {
            axis,
            start,
            stop,
            count,
        })
    }
}

/// A fully specified job.
#[derive(Debug, Clone, PartialEq)]
pub struct JobSpec {
    pub command: Command,
    pub config: Option<PathBuf>,
    /// S11 trace for `fit`.
    pub input: Option<PathBuf>,
    /// Overrides the config's default sweeps when non-empty.
    pub sweeps: Vec<SweepAxis>,
    pub out: PathBuf,
    /// Worker threads; `None` uses one per core. Never affects output bytes.
    pub jobs: Option<usize>,
    pub frame: Frame,
    pub dt_ps: Option<f64>,
    pub db_min: Option<f64>,
    pub db_max: Option<f64>,
}

impl JobSpec {
    pub fn new(command: Command, out: impl Into<PathBuf>) -> Self {
        Self {
            command,
            config: None,
            input: None,
            sweeps: Vec::new(),
            out: out.into(),
            jobs: None,
            frame: Frame::Rotating,
            dt_ps: None,
            db_min: None,
            db_max: None,
        }
    }
}

/// Files written by a job and a human-readable summary.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
}

/// Runs `job`. Every output is computed in memory first and written only
/// once the whole job has succeeded.
pub fn run(job: &JobSpec) -> Result<RunReport, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(job.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let output = pool.install(|| jobs::execute(job))?;
    let files = write_outputs(&job.out, &output.files)?;
    Ok(RunReport {
        files,
        summary: output.summary,
    })
}

fn write_outputs(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<Vec<PathBuf>, CliError> {
    let io = |p: &Path, e: std::io::Error| CliError::Io(format!("{}: {e}", p.display()));
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut written = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
