//! Empirical estimators bridging particle ensembles to the closed-form
//! oracles: exact 1D Wasserstein distance, Gaussian moment matching, and
//! log-log slope fits for bias-order measurements.

use nalgebra::{DMatrix, DVector};

use crate::measures::{GaussianMeasure, MeasureError};
use crate::samplers::Ensemble;

#[derive(Debug, Clone, thiserror::Error)]
pub enum MetricError {
    #[error("sample lists must be nonempty and of equal length: {left} vs {right}")]
    BadSampleLists { left: usize, right: usize },
    #[error("need more samples ({samples}) than dimensions ({dim})")]
    TooFewSamples { samples: usize, dim: usize },
    #[error("covariance is degenerate even after regularization")]
    DegenerateCovariance(#[from] MeasureError),
    #[error("bias sweep needs at least 4 usable points, got {usable} (excluded {excluded})")]
    TooFewSweepPoints { usable: usize, excluded: usize },
    #[error("bias sweep epsilons must be strictly increasing and match the biases in length")]
    BadSweep,
}

/// Exact 1D Wasserstein-2 distance between equal-size sample sets: the
/// optimal coupling in 1D pairs order statistics, so the distance is the
/// root mean squared difference of the sorted lists.
pub fn empirical_w2_1d(samples_a: &[f64], samples_b: &[f64]) -> Result<f64, MetricError> {
    if samples_a.is_empty() || samples_a.len() != samples_b.len() {
        return Err(MetricError::BadSampleLists {
            left: samples_a.len(),
            right: samples_b.len(),
        });
    }
    let mut a = samples_a.to_vec();
    let mut b = samples_b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let msd: f64 = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64;
    Ok(msd.sqrt())
}

/// Regularization floor added to the sample covariance diagonal,
/// 1e-12 · trace/n.
pub const COVARIANCE_FLOOR: f64 = 1e-12;

/// Sample mean and regularized sample covariance as a Gaussian measure.
pub fn moment_match(ensemble: &Ensemble) -> Result<GaussianMeasure, MetricError> {
    let n = ensemble.len();
    let dim = ensemble.dim();
    if n <= dim {
        return Err(MetricError::TooFewSamples {
            samples: n,
            dim,
        });
    }
    let (mean, cov) = ensemble.moments();
    let mut cov_mat = DMatrix::from_fn(dim, dim, |i, j| cov[i][j]);
    let floor = COVARIANCE_FLOOR * cov_mat.trace().max(f64::MIN_POSITIVE) / dim as f64;
    for i in 0..dim {
        cov_mat[(i, i)] += floor;
    }
    Ok(GaussianMeasure::new(
        DVector::from_row_slice(&mean),
        cov_mat,
    )?)
}

/// A (ε, bias) sweep for power-law fitting.
#[derive(Debug, Clone)]
pub struct BiasSweep {
    pub epsilons: Vec<f64>,
    pub biases: Vec<f64>,
}

impl BiasSweep {
    pub fn new(epsilons: Vec<f64>, biases: Vec<f64>) -> Result<Self, MetricError> {
        if epsilons.len() != biases.len()
            || epsilons.windows(2).any(|w| w[0] >= w[1])
            || epsilons.iter().any(|e| *e <= 0.0)
        {
            return Err(MetricError::BadSweep);
        }
        Ok(Self { epsilons, biases })
    }
}

/// Outcome of a log-log least-squares fit of bias against step size.
#[derive(Debug, Clone)]
pub struct BiasOrderFit {
    pub slope: f64,
    pub intercept: f64,
    /// Indices of sweep points excluded because the bias was not strictly
    /// positive.
    pub excluded: Vec<usize>,
}

/// Least-squares fit of log(bias) against log(ε). Nonpositive biases are
/// excluded and reported; at least 4 usable points are required.
pub fn fit_bias_order(sweep: &BiasSweep) -> Result<BiasOrderFit, MetricError> {
    let mut points = Vec::new();
    let mut excluded = Vec::new();
    for (i, (&eps, &bias)) in sweep.epsilons.iter().zip(&sweep.biases).enumerate() {
        if bias > 0.0 {
            points.push((eps.ln(), bias.ln()));
        } else {
            excluded.push(i);
        }
    }
    if points.len() < 4 {
        return Err(MetricError::TooFewSweepPoints {
            usable: points.len(),
            excluded: excluded.len(),
        });
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Ok(BiasOrderFit {
        slope,
        intercept: my - slope * mx,
        excluded,
    })
}
