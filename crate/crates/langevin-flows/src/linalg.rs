//! Dense symmetric-matrix helpers built on spectral decomposition.
//!
//! Every covariance operation in this crate (square roots, inverses,
//! fractional powers, log-determinants) goes through the eigendecomposition
//! of the symmetrized input `(M + Mᵀ)/2`, which keeps results symmetric
//! under floating-point drift.

use nalgebra::{DMatrix, DVector};

/// Relative eigenvalue floor for the positive-definiteness gate:
/// `λ_min > SPD_GATE · λ_max` is required.
pub const SPD_GATE: f64 = 1e-12;

#[derive(Debug, Clone, thiserror::Error)]
pub enum LinalgError {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric: |M - Mᵀ| = {deviation:.3e} exceeds {tolerance:.3e}")]
    NotSymmetric { deviation: f64, tolerance: f64 },
    #[error("matrix is not positive definite: λ_min = {lambda_min:.3e}, λ_max = {lambda_max:.3e}")]
    NotPositiveDefinite { lambda_min: f64, lambda_max: f64 },
}

/// Spectral decomposition of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct SpdDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl SpdDecomposition {
    /// Decompose the symmetrized input, rejecting non-symmetric or
    /// non-positive-definite matrices.
    pub fn new(matrix: &DMatrix<f64>) -> Result<Self, LinalgError> {
        let sym = checked_symmetrize(matrix, 1e-12)?;
        let eig = sym.symmetric_eigen();
        let lambda_max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
        let lambda_min = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
        if !(lambda_min > SPD_GATE * lambda_max && lambda_min > 0.0) {
            return Err(LinalgError::NotPositiveDefinite {
                lambda_min,
                lambda_max,
            });
        }
        Ok(Self {
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
        })
    }

    /// Reassemble `Q f(Λ) Qᵀ` for an eigenvalue map `f`.
    pub fn map_eigenvalues(&self, mut f: impl FnMut(f64) -> f64) -> DMatrix<f64> {
        let q = &self.eigenvectors;
        let d = DMatrix::from_diagonal(&self.eigenvalues.map(|l| f(l)));
        let m = q * d * q.transpose();
        symmetrize(&m)
    }

    pub fn sqrt(&self) -> DMatrix<f64> {
        self.map_eigenvalues(f64::sqrt)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.map_eigenvalues(|l| 1.0 / l)
    }

    pub fn inverse_sqrt(&self) -> DMatrix<f64> {
        self.map_eigenvalues(|l| 1.0 / l.sqrt())
    }

    pub fn log_det(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.ln()).sum()
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues.iter().cloned().fold(f64::MAX, f64::min)
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.iter().cloned().fold(f64::MIN, f64::max)
    }
}

/// `(M + Mᵀ)/2` without any symmetry check.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetrize after verifying `‖M − Mᵀ‖ ≤ rel_tol · ‖M‖` (Frobenius).
pub fn checked_symmetrize(m: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>, LinalgError> {
    if m.nrows() != m.ncols() {
        return Err(LinalgError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let dev = (m - m.transpose()).norm();
    let scale = m.norm().max(f64::MIN_POSITIVE);
    if dev > rel_tol * scale {
        return Err(LinalgError::NotSymmetric {
            deviation: dev,
            tolerance: rel_tol * scale,
        });
    }
    Ok(symmetrize(m))
}

/// Principal square root of an SPD matrix.
pub fn spd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    Ok(SpdDecomposition::new(m)?.sqrt())
}

/// Inverse of an SPD matrix through its spectrum.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    Ok(SpdDecomposition::new(m)?.inverse())
}

/// Hilbert-Schmidt (Frobenius) norm.
pub fn hs_norm(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

/// Frobenius commutator test: `‖AB − BA‖ ≤ tol · ‖A‖ · ‖B‖`.
pub fn commute(a: &DMatrix<f64>, b: &DMatrix<f64>, rel_tol: f64) -> bool {
    let comm = a * b - b * a;
    comm.norm() <= rel_tol * a.norm() * b.norm()
}
