//! The proximal map (I + ε∇f)⁻¹ with residual certification.
//!
//! Dispatch: a potential-supplied solver (closed form for quadratics, the
//! scalar reduction for the two-Gaussian mixture) when available, otherwise
//! damped Newton on the optimality residual y + ε∇f(y) − x. Every returned
//! point is certified to satisfy the residual tolerance.

use nalgebra::{DMatrix, DVector};

use crate::measures::Potential;

pub const DEFAULT_PROX_TOLERANCE: f64 = 1e-10;

const NEWTON_MAX_OUTER: usize = 100;
const NEWTON_MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, thiserror::Error)]
pub enum ProxError {
    #[error("point has dimension {point} but potential expects {expected}")]
    DimensionMismatch { point: usize, expected: usize },
    #[error("epsilon must be positive and finite, got {0}")]
    BadEpsilon(f64),
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("prox solver did not converge: residual {residual:.3e} after {iterations} iterations")]
    NonConvergence { residual: f64, iterations: usize },
    #[error("potential returned a non-finite gradient")]
    NonFiniteGradient,
}

/// One proximal evaluation request.
pub struct ProxRequest<'a> {
    pub potential: &'a dyn Potential,
    pub point: &'a [f64],
    pub epsilon: f64,
    pub tolerance: f64,
}

impl<'a> ProxRequest<'a> {
    pub fn new(potential: &'a dyn Potential, point: &'a [f64], epsilon: f64) -> Self {
        Self {
            potential,
            point,
            epsilon,
            tolerance: DEFAULT_PROX_TOLERANCE,
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }
}

/// Residual of the optimality condition, ‖y + ε∇f(y) − x‖.
pub fn prox_residual(pot: &dyn Potential, x: &[f64], y: &[f64], eps: f64) -> f64 {
    let g = pot.gradient(y);
    y.iter()
        .zip(g.iter())
        .zip(x.iter())
        .map(|((yi, gi), xi)| {
            let r = yi + eps * gi - xi;
            r * r
        })
        .sum::<f64>()
        .sqrt()
}

/// Evaluate the proximal map, certifying ‖y + ε∇f(y) − x‖ ≤ tolerance.
pub fn prox(req: &ProxRequest) -> Result<Vec<f64>, ProxError> {
    let pot = req.potential;
    if req.point.len() != pot.dim() {
        return Err(ProxError::DimensionMismatch {
            point: req.point.len(),
            expected: pot.dim(),
        });
    }
    if !(req.epsilon > 0.0 && req.epsilon.is_finite()) {
        return Err(ProxError::BadEpsilon(req.epsilon));
    }
    if !(req.tolerance > 0.0) {
        return Err(ProxError::BadTolerance(req.tolerance));
    }

    if let Some(y) = pot.closed_form_prox(req.point, req.epsilon) {
        let residual = prox_residual(pot, req.point, &y, req.epsilon);
        if residual <= req.tolerance {
            return Ok(y);
        }
        return Err(ProxError::NonConvergence {
            residual,
            iterations: 0,
        });
    }

    newton_prox(pot, req.point, req.epsilon, req.tolerance)
}

/// Damped Newton on r(y) = y + ε∇f(y) − x, seeded with the forward step
/// x − ε∇f(x) (correct to O(ε²)). Backtracks on the residual norm with
/// factor ½.
fn newton_prox(
    pot: &dyn Potential,
    x: &[f64],
    eps: f64,
    tolerance: f64,
) -> Result<Vec<f64>, ProxError> {
    let n = pot.dim();
    let grad_x = pot.gradient(x);
    if grad_x.iter().any(|g| !g.is_finite()) {
        return Err(ProxError::NonFiniteGradient);
    }
    let mut y: Vec<f64> = x
        .iter()
        .zip(grad_x.iter())
        .map(|(xi, gi)| xi - eps * gi)
        .collect();

    let residual_vec = |y: &[f64]| -> Vec<f64> {
        let g = pot.gradient(y);
        y.iter()
            .zip(g.iter())
            .zip(x.iter())
            .map(|((yi, gi), xi)| yi + eps * gi - xi)
            .collect()
    };
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();

    let mut r = residual_vec(&y);
    let mut r_norm = norm(&r);
    for outer in 0..NEWTON_MAX_OUTER {
        if r_norm <= tolerance {
            return Ok(y);
        }
        // Jacobian I + ε∇²f by central differences of the gradient.
        let h = 1e-6;
        let mut jac = DMatrix::zeros(n, n);
        let mut probe = y.clone();
        for j in 0..n {
            probe[j] = y[j] + h;
            let up = pot.gradient(&probe);
            probe[j] = y[j] - h;
            let down = pot.gradient(&probe);
            probe[j] = y[j];
            for i in 0..n {
                jac[(i, j)] = eps * (up[i] - down[i]) / (2.0 * h);
            }
            jac[(j, j)] += 1.0;
        }
        let rhs = DVector::from_row_slice(&r);
        let delta = match jac.lu().solve(&rhs) {
            Some(d) => d,
            None => {
                return Err(ProxError::NonConvergence {
                    residual: r_norm,
                    iterations: outer,
                })
            }
        };

        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..NEWTON_MAX_HALVINGS {
            let trial: Vec<f64> = y
                .iter()
                .zip(delta.iter())
                .map(|(yi, di)| yi - scale * di)
                .collect();
            let trial_r = residual_vec(&trial);
            let trial_norm = norm(&trial_r);
            if trial_norm < r_norm {
                y = trial;
                r = trial_r;
                r_norm = trial_norm;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            return Err(ProxError::NonConvergence {
                residual: r_norm,
                iterations: outer,
            });
        }
    }
    if r_norm <= tolerance {
        Ok(y)
    } else {
        Err(ProxError::NonConvergence {
            residual: r_norm,
            iterations: NEWTON_MAX_OUTER,
        })
    }
}
