//! Experiment configuration: one JSON document per run.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::measures::GaussianMeasure;

/// Target measure of an experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TargetSpec {
    Gaussian {
        mean: Vec<f64>,
        /// Row-major covariance matrix.
        covariance: Vec<Vec<f64>>,
    },
    Mixture {
        /// Component offset a of ½N(−a, I) + ½N(a, I).
        a: Vec<f64>,
    },
}

impl TargetSpec {
    pub fn gaussian(&self) -> Result<GaussianMeasure, ExperimentError> {
        match self {
            TargetSpec::Gaussian { mean, covariance } => {
                let n = mean.len();
                if covariance.len() != n || covariance.iter().any(|row| row.len() != n) {
                    return Err(ExperimentError::InvalidConfig(
                        "covariance must be an n x n matrix matching the mean".to_string(),
                    ));
                }
                let cov = DMatrix::from_fn(n, n, |i, j| covariance[i][j]);
                Ok(GaussianMeasure::new(DVector::from_row_slice(mean), cov)?)
            }
            TargetSpec::Mixture { .. } => Err(ExperimentError::InvalidConfig(
                "this experiment requires a gaussian target".to_string(),
            )),
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, TargetSpec::Gaussian { .. })
    }
}

/// A single step size or a strictly increasing sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsilonSpec {
    One(f64),
    Sweep(Vec<f64>),
}

impl EpsilonSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            EpsilonSpec::One(e) => vec![*e],
            EpsilonSpec::Sweep(v) => v.clone(),
        }
    }

    fn validate(&self) -> Result<(), ExperimentError> {
        let values = self.values();
        if values.is_empty() || values.iter().any(|e| !(e > &0.0)) {
            return Err(ExperimentError::InvalidConfig(
                "epsilon values must be positive".to_string(),
            ));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ExperimentError::InvalidConfig(
                "epsilon sweep must be strictly increasing".to_string(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub target: TargetSpec,
    /// Scheme or sampler name; required by the experiments that run one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<String>,
    pub epsilon: EpsilonSpec,
    pub particles: usize,
    pub steps: usize,
    pub seed: u64,
    pub output_path: String,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let info = super::registry::registry()
            .into_iter()
            .find(|info| info.name == self.experiment)
            .ok_or_else(|| ExperimentError::UnknownExperiment(self.experiment.clone()))?;
        self.epsilon.validate()?;
        if self.particles == 0 {
            return Err(ExperimentError::InvalidConfig(
                "particles must be positive".to_string(),
            ));
        }
        if self.steps == 0 {
            return Err(ExperimentError::InvalidConfig(
                "steps must be positive".to_string(),
            ));
        }
        if info.needs_scheme && self.scheme.is_none() {
            return Err(ExperimentError::InvalidConfig(format!(
                "experiment '{}' requires a scheme",
                self.experiment
            )));
        }
        if let Some(scheme) = &self.scheme {
            let gaussian_only = ["forward", "backward", "fb", "bf", "exact-ou"];
            if gaussian_only.contains(&scheme.as_str()) && !self.target.is_gaussian() {
                return Err(ExperimentError::InvalidConfig(format!(
                    "scheme '{scheme}' requires a gaussian target"
                )));
            }
        }
        Ok(())
    }
}
