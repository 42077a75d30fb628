//! Declarative experiment runner: JSON configs in, deterministic CSV and
//! JSON summaries out.
//!
//! Each registry entry reproduces one family of quantitative claims about
//! the schemes — bias scaling, coupling contraction, composite limits,
//! heat-flow bracketing, mixture moments, variance decay, and Gaussian
//! fixed-point consistency. A run is a pure function of (config, seed):
//! identical inputs produce byte-identical output files.

mod config;
mod registry;

pub use config::{EpsilonSpec, ExperimentConfig, TargetSpec};
pub use registry::{registry, ExperimentInfo};

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::flows::FlowError;
use crate::measures::MeasureError;
use crate::metrics::MetricError;
use crate::samplers::SamplerError;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("unknown experiment '{0}'")]
    UnknownExperiment(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Integrator(#[from] crate::integrators::IntegratorError),
}

/// One pass/fail line of an experiment's internal verification.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

impl Check {
    /// value must not exceed bound.
    pub fn upper(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            pass: value <= bound,
        }
    }

    /// |value| must not exceed bound.
    pub fn near_zero(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            pass: value.abs() <= bound,
        }
    }

    /// value must lie in [lo, hi]; `bound` records the half-width.
    pub fn in_range(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound: 0.5 * (hi - lo),
            pass: value >= lo && value <= hi,
        }
    }
}

/// Summary document written next to the CSV outputs.
#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub experiment: String,
    pub seed: u64,
    #[serde(rename = "config-hash")]
    pub config_hash: String,
    pub checks: Vec<Check>,
}

impl RunSummary {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Result files produced by a run.
#[derive(Debug)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub files: Vec<PathBuf>,
}

/// SHA-256 of the canonical JSON serialization of the resolved config.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let canonical = serde_json::to_string(config).expect("config serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().fold(String::new(), |mut acc, byte| {
        let _ = write!(acc, "{byte:02x}");
        acc
    })
}

/// Format a float with 17 significant digits so CSV round-trips exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// A CSV table with the config-hash/seed header comment row.
pub struct CsvTable {
    lines: Vec<String>,
}

impl CsvTable {
    pub fn new(config_hash: &str, seed: u64, columns: &[&str]) -> Self {
        Self {
            lines: vec![
                format!("# config-hash={config_hash} seed={seed}"),
                columns.join(","),
            ],
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.lines.push(cells.join(","));
    }

    pub fn contents(&self) -> String {
        let mut s = self.lines.join("\n");
        s.push('\n');
        s
    }
}

/// Write a file atomically (write to a temp name, then rename).
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    let io_err = |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(io_err)?;
        }
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)?;
    Ok(())
}

/// Load a config file, apply overrides, and run the experiment.
pub fn run_from_file(
    config_path: &Path,
    seed_override: Option<u64>,
    out_override: Option<&Path>,
) -> Result<RunOutput, ExperimentError> {
    let text = fs::read_to_string(config_path).map_err(|source| ExperimentError::Io {
        path: config_path.to_path_buf(),
        source,
    })?;
    let mut config: ExperimentConfig = serde_json::from_str(&text)?;
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    if let Some(dir) = out_override {
        config.output_path = dir.to_string_lossy().into_owned();
    }
    run_experiment(&config)
}

/// Validate and execute one experiment; writes the CSV outputs and the
/// JSON summary under the config's output path.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput, ExperimentError> {
    config.validate()?;
    let hash = config_hash(config);
    let out_dir = PathBuf::from(&config.output_path);
    let mut run = registry::Run {
        config,
        hash: hash.clone(),
        out_dir: out_dir.clone(),
        checks: Vec::new(),
        files: Vec::new(),
    };
    registry::dispatch(&mut run)?;

    let summary = RunSummary {
        experiment: config.experiment.clone(),
        seed: config.seed,
        config_hash: hash,
        checks: run.checks,
    };
    let summary_path = out_dir.join(format!("{}-summary.json", config.experiment));
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    write_atomic(&summary_path, &text)?;
    let mut files = run.files;
    files.push(summary_path);
    Ok(RunOutput { summary, files })
}
