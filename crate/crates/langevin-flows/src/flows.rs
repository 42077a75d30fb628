//! Closed-form mean/covariance recursions for Langevin discretizations on
//! Gaussian targets.
//!
//! For a Gaussian target ν = N(μ, Σ) every scheme studied here maps
//! Gaussians to Gaussians, so one step is an explicit (or scalar-implicit)
//! update of the mean and covariance. These recursions are the exact
//! oracles that the particle-level samplers are checked against.
//!
//! Scheme summary, writing A = I − εΣ⁻¹ and B = (I + εΣ⁻¹)⁻¹:
//!
//! | scheme   | mean deviation factor | covariance update                              |
//! |----------|----------------------|------------------------------------------------|
//! | ULA      | A                    | Σ' = AΣρA + 2εI                                |
//! | SLA      | BA                   | Σ' = (BA)Σρ(BA) + 4εB²                         |
//! | FORWARD  | (relative score)     | Σ' = CΣρC, C = I + ε(Σρ⁻¹ − Σ⁻¹)               |
//! | BACKWARD | B                    | Σ'(I − ε(Σ'⁻¹ − Σ⁻¹))² = Σρ (implicit)         |
//! | FB       | A                    | Σ'(I − εΣ'⁻¹)² = AΣρA (implicit)               |
//! | BF       | B                    | Σ' = B(I + εΣρ⁻¹)Σρ(I + εΣρ⁻¹)B               |
//!
//! The implicit updates diagonalize jointly with Σ (the schemes require
//! commuting covariances) and reduce to one scalar root-find per eigenvalue.

use nalgebra::{DMatrix, DVector};

use crate::linalg;
use crate::measures::{gaussian_w2, GaussianMeasure, MeasureError};

/// Residual target for the scalar implicit solves.
pub const IMPLICIT_RESIDUAL: f64 = 1e-12;

/// Fixed-point iteration caps (successive-W2 threshold, iteration limit).
pub const FIXED_POINT_TOL: f64 = 1e-12;
pub const FIXED_POINT_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, thiserror::Error)]
pub enum FlowError {
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("step size must be positive and finite, got {0}")]
    BadStepSize(f64),
    #[error("step size {eps} inadmissible for {scheme:?}: requires {requirement}")]
    InadmissibleStep {
        scheme: SchemeKind,
        eps: f64,
        requirement: String,
    },
    #[error("covariances do not commute; {scheme:?} is defined for commuting Gaussian data")]
    NonCommuting { scheme: SchemeKind },
    #[error("implicit covariance solve failed: residual {residual:.3e} after {iterations} iterations")]
    ImplicitSolve { residual: f64, iterations: usize },
    #[error("fixed-point iteration did not converge within {0} iterations")]
    FixedPointDiverged(usize),
}

/// Positive step size in time units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSize(f64);

impl StepSize {
    pub fn new(eps: f64) -> Result<Self, FlowError> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(FlowError::BadStepSize(eps));
        }
        Ok(Self(eps))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// The discretization schemes with closed-form Gaussian recursions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    /// Exact Ornstein-Uhlenbeck flow over one step of time ε.
    ExactOu,
    /// Explicit gradient step plus exact heat step.
    Ula,
    /// ULA composed with its adjoint; proximal step, √(4ε) noise.
    Sla,
    /// Forward (explicit) method for relative entropy.
    Forward,
    /// Backward (implicit) method for relative entropy.
    Backward,
    /// Gradient step on the potential, implicit entropy step.
    Fb,
    /// Proximal step on the potential, explicit entropy step.
    Bf,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 7] = [
        SchemeKind::ExactOu,
        SchemeKind::Ula,
        SchemeKind::Sla,
        SchemeKind::Forward,
        SchemeKind::Backward,
        SchemeKind::Fb,
        SchemeKind::Bf,
    ];

    pub fn requires_commuting(self) -> bool {
        matches!(
            self,
            SchemeKind::Forward | SchemeKind::Backward | SchemeKind::Fb | SchemeKind::Bf
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::ExactOu => "exact-ou",
            SchemeKind::Ula => "ula",
            SchemeKind::Sla => "sla",
            SchemeKind::Forward => "forward",
            SchemeKind::Backward => "backward",
            SchemeKind::Fb => "fb",
            SchemeKind::Bf => "bf",
        }
    }
}

impl std::str::FromStr for SchemeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "exact-ou" | "exact_ou" | "exact" => Ok(SchemeKind::ExactOu),
            "ula" => Ok(SchemeKind::Ula),
            "sla" => Ok(SchemeKind::Sla),
            "forward" => Ok(SchemeKind::Forward),
            "backward" => Ok(SchemeKind::Backward),
            "fb" => Ok(SchemeKind::Fb),
            "bf" => Ok(SchemeKind::Bf),
            other => Err(format!("unknown scheme '{other}'")),
        }
    }
}

/// Law of the OU process at time t started from ρ0:
/// mean μ + E(μ0 − μ) and covariance EΣ0E + Σ(I − E²), with E = e^{−tΣ⁻¹}.
pub fn ou_exact_flow(
    nu: &GaussianMeasure,
    rho0: &GaussianMeasure,
    t: f64,
) -> Result<GaussianMeasure, FlowError> {
    if nu.dim() != rho0.dim() {
        return Err(MeasureError::DimensionMismatch {
            left: nu.dim(),
            right: rho0.dim(),
        }
        .into());
    }
    let decay = nu.spectrum().map_eigenvalues(|l| (-t / l).exp());
    let mean = nu.mean() + &decay * (rho0.mean() - nu.mean());
    let relax = nu.spectrum().map_eigenvalues(|l| l * (1.0 - (-2.0 * t / l).exp()));
    let cov = &decay * rho0.covariance() * &decay + relax;
    Ok(GaussianMeasure::new(mean, cov)?)
}

/// One step of the chosen scheme's closed-form recursion.
pub fn scheme_step(
    kind: SchemeKind,
    nu: &GaussianMeasure,
    rho: &GaussianMeasure,
    eps: StepSize,
) -> Result<GaussianMeasure, FlowError> {
    if nu.dim() != rho.dim() {
        return Err(MeasureError::DimensionMismatch {
            left: nu.dim(),
            right: rho.dim(),
        }
        .into());
    }
    let e = eps.value();
    match kind {
        SchemeKind::ExactOu => ou_exact_flow(nu, rho, e),
        SchemeKind::Ula => {
            let lam_min = nu.spectrum().lambda_min();
            if e >= 2.0 * lam_min {
                return Err(FlowError::InadmissibleStep {
                    scheme: kind,
                    eps: e,
                    requirement: format!("eps < 2 lambda_min(Sigma) = {}", 2.0 * lam_min),
                });
            }
            let a = nu.spectrum().map_eigenvalues(|l| 1.0 - e / l);
            let mean = nu.mean() + &a * (rho.mean() - nu.mean());
            let n = nu.dim();
            let cov = &a * rho.covariance() * &a + DMatrix::identity(n, n) * (2.0 * e);
            Ok(GaussianMeasure::new(mean, cov)?)
        }
        SchemeKind::Sla => {
            let a = nu
                .spectrum()
                .map_eigenvalues(|l| (1.0 - e / l) / (1.0 + e / l));
            let b2 = nu.spectrum().map_eigenvalues(|l| {
                let b = 1.0 / (1.0 + e / l);
                b * b
            });
            let mean = nu.mean() + &a * (rho.mean() - nu.mean());
            let cov = &a * rho.covariance() * &a + b2 * (4.0 * e);
            Ok(GaussianMeasure::new(mean, cov)?)
        }
        SchemeKind::Forward | SchemeKind::Backward | SchemeKind::Fb | SchemeKind::Bf => {
            commuting_scheme_step(kind, nu, rho, e)
        }
    }
}

/// Limit measure of ULA on a Gaussian target:
/// ν_ε = N(μ, Σ(I − (ε/2)Σ⁻¹)⁻¹), valid for 0 < ε < 2λ_min(Σ).
pub fn ula_limit(nu: &GaussianMeasure, eps: StepSize) -> Result<GaussianMeasure, FlowError> {
    let e = eps.value();
    let lam_min = nu.spectrum().lambda_min();
    if e >= 2.0 * lam_min {
        return Err(FlowError::InadmissibleStep {
            scheme: SchemeKind::Ula,
            eps: e,
            requirement: format!("eps < 2 lambda_min(Sigma) = {}", 2.0 * lam_min),
        });
    }
    let cov = nu.spectrum().map_eigenvalues(|l| l / (1.0 - e / (2.0 * l)));
    Ok(GaussianMeasure::new(nu.mean().clone(), cov)?)
}

/// W2 distance between the target and the ULA limit measure; to leading
/// order (ε/4)·√Tr(Σ⁻¹).
pub fn ula_bias(nu: &GaussianMeasure, eps: StepSize) -> Result<f64, FlowError> {
    let limit = ula_limit(nu, eps)?;
    Ok(gaussian_w2(nu, &limit)?)
}

/// Heat flow at time t: N(μ, Σ + 2tI).
pub fn heat_exact(rho: &GaussianMeasure, t: f64) -> Result<GaussianMeasure, FlowError> {
    let n = rho.dim();
    let cov = rho.covariance() + DMatrix::identity(n, n) * (2.0 * t);
    Ok(GaussianMeasure::new(rho.mean().clone(), cov)?)
}

/// Forward (explicit) step for the heat flow on Gaussian data:
/// Σ ← Σ(I + εΣ⁻¹)², mean unchanged.
pub fn heat_forward_step(
    rho: &GaussianMeasure,
    eps: StepSize,
) -> Result<GaussianMeasure, FlowError> {
    let e = eps.value();
    let cov = rho.spectrum().map_eigenvalues(|l| {
        let c = 1.0 + e / l;
        l * c * c
    });
    Ok(GaussianMeasure::new(rho.mean().clone(), cov)?)
}

/// Backward (implicit) step for the heat flow on Gaussian data:
/// Σ ← ½(Σ + 2εI + {Σ(Σ + 4εI)}^{1/2}), mean unchanged; requires
/// 0 < ε ≤ λ_min(Σ). Result satisfies Σ₊(I − εΣ₊⁻¹)² = Σ.
pub fn heat_backward_step(
    rho: &GaussianMeasure,
    eps: StepSize,
) -> Result<GaussianMeasure, FlowError> {
    let e = eps.value();
    let lam_min = rho.spectrum().lambda_min();
    if e > lam_min {
        return Err(FlowError::InadmissibleStep {
            scheme: SchemeKind::Backward,
            eps: e,
            requirement: format!("eps <= lambda_min(Sigma) = {lam_min}"),
        });
    }
    let mut worst = 0.0f64;
    let cov = rho.spectrum().map_eigenvalues(|s| {
        let t = 0.5 * (s + 2.0 * e + (s * (s + 4.0 * e)).sqrt());
        let c = 1.0 - e / t;
        worst = worst.max((t * c * c - s).abs() / s.max(1.0));
        t
    });
    if worst > IMPLICIT_RESIDUAL {
        return Err(FlowError::ImplicitSolve {
            residual: worst,
            iterations: 0,
        });
    }
    Ok(GaussianMeasure::new(rho.mean().clone(), cov)?)
}

/// Gradient flow of variance at time t: pushforward of
/// x ↦ μ0 + e^{−2t}(x − μ0), so the mean is fixed and the covariance is
/// scaled by e^{−4t}.
pub fn variance_flow(rho0: &GaussianMeasure, t: f64) -> Result<GaussianMeasure, FlowError> {
    let scale = (-4.0 * t).exp();
    Ok(GaussianMeasure::new(
        rho0.mean().clone(),
        rho0.covariance() * scale,
    )?)
}

/// Iterate `scheme_step` until successive iterates are within W2 1e-12 (or
/// the iteration cap); returns the final measure and the step count.
pub fn scheme_fixed_point(
    kind: SchemeKind,
    nu: &GaussianMeasure,
    rho0: &GaussianMeasure,
    eps: StepSize,
) -> Result<(GaussianMeasure, usize), FlowError> {
    let mut current = rho0.clone();
    for k in 0..FIXED_POINT_MAX_ITER {
        let next = scheme_step(kind, nu, &current, eps)?;
        let moved = gaussian_w2(&current, &next)?;
        current = next;
        if moved < FIXED_POINT_TOL {
            return Ok((current, k + 1));
        }
    }
    Err(FlowError::FixedPointDiverged(FIXED_POINT_MAX_ITER))
}

/// Joint eigenbasis of a commuting pair: returns (Q, d_nu, d_rho) with
/// Σν = Q diag(d_nu) Qᵀ and Σρ = Q diag(d_rho) Qᵀ.
fn simultaneous_diagonalize(
    nu: &GaussianMeasure,
    rho: &GaussianMeasure,
    scheme: SchemeKind,
) -> Result<(DMatrix<f64>, DVector<f64>, DVector<f64>), FlowError> {
    if !linalg::commute(nu.covariance(), rho.covariance(), 1e-10) {
        return Err(FlowError::NonCommuting { scheme });
    }
    let mut q = nu.spectrum().eigenvectors.clone();
    let d_nu = nu.spectrum().eigenvalues.clone();
    let n = d_nu.len();

    // Within eigenvalue blocks of Σν the basis is free; rotate each block to
    // diagonalize Σρ there as well.
    let mut r = q.transpose() * rho.covariance() * &q;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (d_nu[end] - d_nu[start]).abs() <= 1e-10 * d_nu[start].abs().max(1.0) {
            end += 1;
        }
        if end - start > 1 {
            let block = r.view((start, start), (end - start, end - start)).into_owned();
            let eig = linalg::symmetrize(&block).symmetric_eigen();
            let qb = eig.eigenvectors;
            let cols = q.columns(start, end - start) * &qb;
            q.columns_mut(start, end - start).copy_from(&cols);
        }
        start = end;
    }
    r = q.transpose() * rho.covariance() * &q;
    let d_rho = r.diagonal();
    // Off-diagonal residue measures how far from truly commuting we are.
    let off = (&r - DMatrix::from_diagonal(&d_rho)).norm();
    if off > 1e-8 * rho.covariance().norm().max(1.0) {
        return Err(FlowError::NonCommuting { scheme });
    }
    Ok((q, d_nu, d_rho))
}

fn commuting_scheme_step(
    kind: SchemeKind,
    nu: &GaussianMeasure,
    rho: &GaussianMeasure,
    e: f64,
) -> Result<GaussianMeasure, FlowError> {
    let (q, d_nu, d_rho) = simultaneous_diagonalize(nu, rho, kind)?;
    let n = d_nu.len();

    if matches!(kind, SchemeKind::Fb | SchemeKind::Bf) {
        let lam_min = nu.spectrum().lambda_min();
        if e > lam_min {
            return Err(FlowError::InadmissibleStep {
                scheme: kind,
                eps: e,
                requirement: format!("eps <= lambda_min(Sigma) = {lam_min}"),
            });
        }
    }

    let mut d_out = DVector::zeros(n);
    for i in 0..n {
        let sv = d_nu[i];
        let s = d_rho[i];
        d_out[i] = match kind {
            SchemeKind::Forward => {
                let c = 1.0 + e * (1.0 / s - 1.0 / sv);
                if c <= 0.0 {
                    return Err(FlowError::InadmissibleStep {
                        scheme: kind,
                        eps: e,
                        requirement: "I + eps(Sigma_rho^-1 - Sigma^-1) must stay positive"
                            .to_string(),
                    });
                }
                s * c * c
            }
            SchemeKind::Backward => solve_backward_eigenvalue(s, sv, e)?,
            SchemeKind::Fb => {
                let half = s * (1.0 - e / sv) * (1.0 - e / sv);
                // Backward heat step from the half-step covariance.
                let t = 0.5 * (half + 2.0 * e + (half * (half + 4.0 * e)).sqrt());
                let res = (t * (1.0 - e / t) * (1.0 - e / t) - half).abs();
                if res > IMPLICIT_RESIDUAL * half.max(1.0) {
                    return Err(FlowError::ImplicitSolve {
                        residual: res,
                        iterations: 0,
                    });
                }
                t
            }
            SchemeKind::Bf => {
                let b = 1.0 / (1.0 + e / sv);
                let grown = (s + e) * (s + e) / s;
                b * b * grown
            }
            _ => unreachable!("non-commuting schemes handled above"),
        };
    }

    let cov = &q * DMatrix::from_diagonal(&d_out) * q.transpose();
    let mean = match kind {
        SchemeKind::Forward => {
            let shift = nu.spectrum().map_eigenvalues(|l| e / l);
            rho.mean() - &shift * (rho.mean() - nu.mean())
        }
        SchemeKind::Backward | SchemeKind::Bf => {
            let b = nu.spectrum().map_eigenvalues(|l| 1.0 / (1.0 + e / l));
            nu.mean() + &b * (rho.mean() - nu.mean())
        }
        SchemeKind::Fb => {
            let a = nu.spectrum().map_eigenvalues(|l| 1.0 - e / l);
            nu.mean() + &a * (rho.mean() - nu.mean())
        }
        _ => unreachable!(),
    };
    Ok(GaussianMeasure::new(mean, linalg::symmetrize(&cov))?)
}

/// Solve t(1 − ε(1/t − 1/sν))² = s for the backward relative-entropy step.
///
/// Writing a = 1 + ε/sν, the equation is ((a t − ε)²)/t = s, which is
/// strictly increasing in t on t > ε/a, so the root is unique. A safeguarded
/// Newton iteration from the quadratic-formula seed certifies the residual.
fn solve_backward_eigenvalue(s: f64, s_nu: f64, e: f64) -> Result<f64, FlowError> {
    let a = 1.0 + e / s_nu;
    let disc = (2.0 * a * e + s) * (2.0 * a * e + s) - 4.0 * a * a * e * e;
    let mut t = ((2.0 * a * e + s) + disc.max(0.0).sqrt()) / (2.0 * a * a);
    let (mut lo, mut hi) = (e / a, f64::INFINITY);
    let g = |t: f64| (a * t - e) * (a * t - e) / t;
    let dg = |t: f64| (a * t - e) * (a * t + e) / (t * t);
    let mut residual = f64::INFINITY;
    for iter in 0..100 {
        let val = g(t) - s;
        residual = val.abs();
        if residual <= IMPLICIT_RESIDUAL * s.max(1.0) {
            return Ok(t);
        }
        if val > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let step = val / dg(t);
        let mut next = t - step;
        if !(next > lo && next < hi) {
            next = if hi.is_finite() {
                0.5 * (lo + hi)
            } else {
                t.max(lo) * 2.0
            };
        }
        if (next - t).abs() <= f64::EPSILON * t.abs() && iter > 3 {
            t = next;
            break;
        }
        t = next;
    }
    if residual <= 1e-9 * s.max(1.0) {
        Ok(t)
    } else {
        Err(FlowError::ImplicitSolve {
            residual,
            iterations: 100,
        })
    }
}
