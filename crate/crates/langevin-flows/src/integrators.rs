//! One-dimensional integrator algebra on linear vector fields.
//!
//! An integrator for the flow of v(x) = −λ(x − a) is a step-size-indexed
//! family of affine maps. Representing the families symbolically (as
//! coefficient functions of ε) keeps adjoints and compositions exact, so
//! the algebraic identities — adjoint(forward) = backward, symmetrized
//! compositions are self-adjoint with even order — hold to rounding error
//! instead of fit noise.

use std::sync::Arc;

#[derive(Debug, Clone, thiserror::Error)]
pub enum IntegratorError {
    #[error("backward map is singular at eps={eps}: 1 + eps*lambda = 0")]
    SingularBackwardMap { eps: f64 },
    #[error("map is not contractive: |c| = {c_abs} >= 1")]
    NonContractive { c_abs: f64 },
    #[error("degenerate order fit: {usable} usable residuals above the floating-point floor")]
    DegenerateFit { usable: usize },
    #[error("step size {eps} inadmissible: requires {requirement}")]
    InadmissibleStep { eps: f64, requirement: String },
    #[error("quadratic instance is invalid: {0}")]
    BadInstance(String),
}

/// The affine map x ↦ c·x + d.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineStepMap {
    pub c: f64,
    pub d: f64,
}

impl AffineStepMap {
    pub fn identity() -> Self {
        Self { c: 1.0, d: 0.0 }
    }

    pub fn apply(&self, x: f64) -> f64 {
        self.c * x + self.d
    }

    /// Inverse map; the map is invertible iff c ≠ 0.
    pub fn inverse(&self) -> Option<Self> {
        if self.c == 0.0 {
            return None;
        }
        Some(Self {
            c: 1.0 / self.c,
            d: -self.d / self.c,
        })
    }
}

/// (a ∘ b)(x) = a(b(x)): coefficients c = c_a c_b, d = c_a d_b + d_a.
pub fn compose(a: AffineStepMap, b: AffineStepMap) -> AffineStepMap {
    AffineStepMap {
        c: a.c * b.c,
        d: a.c * b.d + a.d,
    }
}

/// Unique limit d/(1−c) of iterating a contractive map (|c| < 1).
pub fn fixed_point(m: AffineStepMap) -> Result<f64, IntegratorError> {
    if m.c.abs() >= 1.0 {
        return Err(IntegratorError::NonContractive { c_abs: m.c.abs() });
    }
    Ok(m.d / (1.0 - m.c))
}

/// The linear vector field v(x) = −λ(x − anchor); for λ > 0 this is the
/// gradient field of ½λ(x − anchor)².
#[derive(Debug, Clone, Copy)]
pub struct LinearField {
    pub lambda: f64,
    pub anchor: f64,
}

impl LinearField {
    pub fn new(lambda: f64, anchor: f64) -> Self {
        Self { lambda, anchor }
    }

    /// Exact flow map over time t.
    pub fn flow(&self, t: f64) -> AffineStepMap {
        let c = (-t * self.lambda).exp();
        AffineStepMap {
            c,
            d: (1.0 - c) * self.anchor,
        }
    }

    /// Field of the superposed flow v_f + v_g.
    pub fn combine(fields: &[LinearField]) -> LinearField {
        let lambda: f64 = fields.iter().map(|f| f.lambda).sum();
        let anchor = fields.iter().map(|f| f.lambda * f.anchor).sum::<f64>() / lambda;
        LinearField { lambda, anchor }
    }
}

/// The basic one-step methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegratorKind {
    Forward,
    Backward,
    Exact,
    Trapezoid,
    Midpoint,
}

impl IntegratorKind {
    pub const ALL: [IntegratorKind; 5] = [
        IntegratorKind::Forward,
        IntegratorKind::Backward,
        IntegratorKind::Exact,
        IntegratorKind::Trapezoid,
        IntegratorKind::Midpoint,
    ];
}

/// One step of the chosen method on a linear field. Every kind fixes the
/// anchor exactly, so the offset is d = (1 − c)·anchor.
pub fn step_map(
    kind: IntegratorKind,
    field: &LinearField,
    eps: f64,
) -> Result<AffineStepMap, IntegratorError> {
    let u = eps * field.lambda;
    let c = match kind {
        IntegratorKind::Forward => 1.0 - u,
        IntegratorKind::Backward => {
            if 1.0 + u == 0.0 {
                return Err(IntegratorError::SingularBackwardMap { eps });
            }
            1.0 / (1.0 + u)
        }
        IntegratorKind::Exact => (-u).exp(),
        // Forward then backward half-steps (trapezoid rule); the reverse
        // order (implicit midpoint) produces the same map on linear fields.
        IntegratorKind::Trapezoid | IntegratorKind::Midpoint => {
            if 1.0 + 0.5 * u == 0.0 {
                return Err(IntegratorError::SingularBackwardMap { eps });
            }
            (1.0 - 0.5 * u) / (1.0 + 0.5 * u)
        }
    };
    Ok(AffineStepMap {
        c,
        d: (1.0 - c) * field.anchor,
    })
}

/// A step-size-indexed family ε ↦ A_ε, kept symbolic through closures.
#[derive(Clone)]
pub struct AffineFamily {
    build: Arc<dyn Fn(f64) -> Result<AffineStepMap, IntegratorError> + Send + Sync>,
}

impl AffineFamily {
    pub fn new(
        build: impl Fn(f64) -> Result<AffineStepMap, IntegratorError> + Send + Sync + 'static,
    ) -> Self {
        Self {
            build: Arc::new(build),
        }
    }

    pub fn of_kind(kind: IntegratorKind, field: LinearField) -> Self {
        Self::new(move |eps| step_map(kind, &field, eps))
    }

    pub fn exact(field: LinearField) -> Self {
        Self::new(move |t| Ok(field.flow(t)))
    }

    pub fn at(&self, eps: f64) -> Result<AffineStepMap, IntegratorError> {
        (self.build)(eps)
    }

    /// Adjoint family A*_ε = (A_{−ε})⁻¹.
    pub fn adjoint(&self) -> Self {
        let inner = self.build.clone();
        Self::new(move |eps| {
            let back = inner(-eps)?;
            back.inverse()
                .ok_or(IntegratorError::SingularBackwardMap { eps })
        })
    }

    /// (A ∘ B)_ε = A_ε ∘ B_ε.
    pub fn compose(&self, other: &Self) -> Self {
        let a = self.build.clone();
        let b = other.build.clone();
        Self::new(move |eps| Ok(compose(a(eps)?, b(eps)?)))
    }

    /// Family ε ↦ A_{factor·ε}.
    pub fn rescale(&self, factor: f64) -> Self {
        let inner = self.build.clone();
        Self::new(move |eps| inner(factor * eps))
    }
}

/// Outcome of a numerical order fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OrderEstimate {
    /// All residuals sit below the floating-point floor (the exact flow).
    Exact,
    /// Fitted order p from ‖φ_ε(x0) − A_ε(x0)‖ ~ ε^{p+1}.
    Order(f64),
}

impl OrderEstimate {
    pub fn value(&self) -> Option<f64> {
        match self {
            OrderEstimate::Exact => None,
            OrderEstimate::Order(p) => Some(*p),
        }
    }
}

/// Fit the order of `family` as an integrator for the flow of `field`,
/// from the one-step residual at x0 over the ladder ε ∈ {2⁻³, …, 2⁻¹⁰}.
/// Residuals below 1e-13 are discarded; if all are, the integrator is
/// reported exact.
pub fn estimate_order_of_family(
    family: &AffineFamily,
    field: &LinearField,
    x0: f64,
) -> Result<OrderEstimate, IntegratorError> {
    let mut points = Vec::new();
    let mut evaluated = 0;
    for k in 3..=10 {
        let eps = 0.5f64.powi(k);
        let approx = family.at(eps)?;
        let exact = field.flow(eps);
        let residual = (approx.apply(x0) - exact.apply(x0)).abs();
        evaluated += 1;
        if residual > 1e-13 {
            points.push((eps.ln(), residual.ln()));
        }
    }
    if points.is_empty() {
        return Ok(OrderEstimate::Exact);
    }
    if points.len() < 3 {
        return Err(IntegratorError::DegenerateFit {
            usable: points.len(),
        });
    }
    let _ = evaluated;
    let slope = least_squares_slope(&points);
    Ok(OrderEstimate::Order(slope - 1.0))
}

/// Order of a basic method on a linear field (λ ≠ 0).
pub fn estimate_order(
    kind: IntegratorKind,
    field: &LinearField,
    x0: f64,
) -> Result<OrderEstimate, IntegratorError> {
    if field.lambda == 0.0 {
        return Err(IntegratorError::BadInstance(
            "field decay rate must be nonzero".to_string(),
        ));
    }
    estimate_order_of_family(&AffineFamily::of_kind(kind, *field), field, x0)
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    sxy / sxx
}

/// The basic algorithms of the composite-limit table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompositeAlg {
    /// Gradient descent (forward method).
    Gd,
    /// Exact gradient flow.
    Gf,
    /// Proximal gradient (backward method).
    Pg,
}

impl CompositeAlg {
    pub const ALL: [CompositeAlg; 3] = [CompositeAlg::Gd, CompositeAlg::Gf, CompositeAlg::Pg];

    pub fn kind(self) -> IntegratorKind {
        match self {
            CompositeAlg::Gd => IntegratorKind::Forward,
            CompositeAlg::Gf => IntegratorKind::Exact,
            CompositeAlg::Pg => IntegratorKind::Backward,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CompositeAlg::Gd => "GD",
            CompositeAlg::Gf => "GF",
            CompositeAlg::Pg => "PG",
        }
    }
}

/// The composite test instance: f(x) = ½(x−1)² and g(x) = ½(x+1)², whose
/// sum is minimized at 0.
pub const COMPOSITE_FIELD_F: LinearField = LinearField {
    lambda: 1.0,
    anchor: 1.0,
};
pub const COMPOSITE_FIELD_G: LinearField = LinearField {
    lambda: 1.0,
    anchor: -1.0,
};

/// One cycle of the composite iteration for (alg_f, alg_g).
///
/// The map for f is applied first except in the (PG, GD) and (PG, PG)
/// cells, which the reference table lists in the mirror-symmetric order
/// (read just after the proximal step on f). That reading is what makes
/// the Backward-Forward pairing come out unbiased.
pub fn composite_step_map(
    alg_f: CompositeAlg,
    alg_g: CompositeAlg,
    eps: f64,
) -> Result<AffineStepMap, IntegratorError> {
    let map_f = step_map(alg_f.kind(), &COMPOSITE_FIELD_F, eps)?;
    let map_g = step_map(alg_g.kind(), &COMPOSITE_FIELD_G, eps)?;
    let g_first = matches!(
        (alg_f, alg_g),
        (CompositeAlg::Pg, CompositeAlg::Gd) | (CompositeAlg::Pg, CompositeAlg::Pg)
    );
    Ok(if g_first {
        compose(map_f, map_g)
    } else {
        compose(map_g, map_f)
    })
}

/// Limit point of the composite iteration for (alg_f, alg_g) at step ε.
pub fn composite_limit(
    alg_f: CompositeAlg,
    alg_g: CompositeAlg,
    eps: f64,
) -> Result<f64, IntegratorError> {
    fixed_point(composite_step_map(alg_f, alg_g, eps)?)
}

/// Analytic limit of each composite cell, as tabulated for
/// f(x) = ½(x−1)², g(x) = ½(x+1)². The (PG, PG) entry is the fixed point
/// ε/(2+ε) of its tabulated iteration x ↦ x/(1+ε)² + ε²/(1+ε)².
pub fn composite_limit_formula(alg_f: CompositeAlg, alg_g: CompositeAlg, eps: f64) -> f64 {
    use CompositeAlg::*;
    let em = (-eps).exp();
    match (alg_f, alg_g) {
        (Gd, Gd) => -eps / (2.0 - eps),
        (Gd, Gf) => (em * (1.0 + eps) - 1.0) / (1.0 - em * (1.0 - eps)),
        (Gd, Pg) => 0.0,
        (Gf, Gd) => ((1.0 - em) * (1.0 - eps) - eps) / (1.0 - em * (1.0 - eps)),
        (Gf, Gf) => -(1.0 - em) * (1.0 - em) / (1.0 - em * em),
        (Gf, Pg) => (1.0 - em - eps) / (1.0 - em + eps),
        (Pg, Gd) => 0.0,
        (Pg, Gf) => (em * eps - (1.0 - em) * (1.0 + eps)) / (1.0 + eps - em),
        (Pg, Pg) => eps / (2.0 + eps),
    }
}

/// Diagonal quadratic ½ Σᵢ dᵢ (xᵢ − aᵢ)².
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub curvatures: Vec<f64>,
    pub anchors: Vec<f64>,
}

impl Quadratic {
    pub fn new(curvatures: Vec<f64>, anchors: Vec<f64>) -> Result<Self, IntegratorError> {
        if curvatures.len() != anchors.len() || curvatures.is_empty() {
            return Err(IntegratorError::BadInstance(
                "curvatures and anchors must be nonempty and of equal length".to_string(),
            ));
        }
        Ok(Self {
            curvatures,
            anchors,
        })
    }

    pub fn dim(&self) -> usize {
        self.curvatures.len()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.curvatures)
            .zip(&self.anchors)
            .map(|((xi, di), ai)| 0.5 * di * (xi - ai) * (xi - ai))
            .sum()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.curvatures)
            .zip(&self.anchors)
            .map(|((xi, di), ai)| di * (xi - ai))
            .collect()
    }

    pub fn min_curvature(&self) -> f64 {
        self.curvatures.iter().cloned().fold(f64::MAX, f64::min)
    }

    pub fn max_curvature(&self) -> f64 {
        self.curvatures.iter().cloned().fold(f64::MIN, f64::max)
    }

    fn gd_step(&self, x: &mut [f64], eps: f64) {
        for ((xi, di), ai) in x.iter_mut().zip(&self.curvatures).zip(&self.anchors) {
            *xi -= eps * di * (*xi - ai);
        }
    }

    fn pg_step(&self, x: &mut [f64], eps: f64) {
        for ((xi, di), ai) in x.iter_mut().zip(&self.curvatures).zip(&self.anchors) {
            *xi = (*xi + eps * di * ai) / (1.0 + eps * di);
        }
    }
}

/// Squared-distance contraction factor of one gradient step on a
/// K-semiconvex, L-smooth function: 1 − 2εKL/(K+L), valid for
/// 0 ≤ ε ≤ 2/(K+L).
pub fn semiconvex_contraction_factor(k: f64, l: f64, eps: f64) -> f64 {
    1.0 - 2.0 * eps * k * l / (k + l)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateScheme {
    Gd,
    Pg,
    SymmetrizedForward,
    Fb,
}

/// Per-iterate function-value gaps and the matching theoretical bound
/// sequence.
#[derive(Debug, Clone)]
pub struct RateCheck {
    pub gaps: Vec<f64>,
    pub bounds: Vec<f64>,
}

impl RateCheck {
    pub fn respected(&self, slack: f64) -> bool {
        self.gaps
            .iter()
            .zip(&self.bounds)
            .all(|(gap, bound)| *gap <= bound + slack)
    }
}

/// Run `k` iterations of the scheme as real vector iterations and return
/// the observed gaps next to the proved bound sequence.
///
/// For GD/PG/SymmetrizedForward the instance is the single quadratic `f`
/// (pass `g = None`); FB needs the composite pair, with `f` allowed to be
/// K-semiconvex (negative curvatures) and `g` convex.
pub fn euclidean_rate_check(
    scheme: RateScheme,
    f: &Quadratic,
    g: Option<&Quadratic>,
    x0: &[f64],
    eps: f64,
    k: usize,
) -> Result<RateCheck, IntegratorError> {
    match scheme {
        RateScheme::Gd | RateScheme::Pg | RateScheme::SymmetrizedForward => {
            if g.is_some() {
                return Err(IntegratorError::BadInstance(
                    "single-function schemes take no second quadratic".to_string(),
                ));
            }
            let alpha = f.min_curvature();
            let l = f.max_curvature();
            if alpha <= 0.0 {
                return Err(IntegratorError::BadInstance(
                    "scheme requires a strictly convex quadratic".to_string(),
                ));
            }
            let needs_smooth = !matches!(scheme, RateScheme::Pg);
            if needs_smooth && eps > 2.0 / l {
                return Err(IntegratorError::InadmissibleStep {
                    eps,
                    requirement: format!("eps <= 2/L = {}", 2.0 / l),
                });
            }
            let factor = match scheme {
                RateScheme::Gd => 1.0 - 2.0 * alpha * eps * (1.0 - eps * l / 2.0),
                RateScheme::Pg => 1.0 / (1.0 + alpha * eps),
                RateScheme::SymmetrizedForward => {
                    (1.0 - 2.0 * alpha * eps * (1.0 - eps * l / 2.0)) / (1.0 + alpha * eps)
                }
                RateScheme::Fb => unreachable!(),
            };
            let mut x = x0.to_vec();
            let gap0 = f.value(&x);
            let mut gaps = vec![gap0];
            let mut bounds = vec![gap0];
            for j in 1..=k {
                match scheme {
                    RateScheme::Gd => f.gd_step(&mut x, eps),
                    RateScheme::Pg => f.pg_step(&mut x, eps),
                    RateScheme::SymmetrizedForward => {
                        f.gd_step(&mut x, eps);
                        f.pg_step(&mut x, eps);
                    }
                    RateScheme::Fb => unreachable!(),
                }
                gaps.push(f.value(&x));
                bounds.push(gap0 * factor.powi(j as i32));
            }
            Ok(RateCheck { gaps, bounds })
        }
        RateScheme::Fb => {
            let g = g.ok_or_else(|| {
                IntegratorError::BadInstance("FB requires the composite pair".to_string())
            })?;
            if g.dim() != f.dim() {
                return Err(IntegratorError::BadInstance(
                    "composite pair dimensions differ".to_string(),
                ));
            }
            if g.min_curvature() < 0.0 {
                return Err(IntegratorError::BadInstance(
                    "g must be convex".to_string(),
                ));
            }
            let kappa = f.min_curvature();
            let l = f.max_curvature();
            if l <= 0.0_f64.max(-kappa) {
                return Err(IntegratorError::BadInstance(
                    "FB requires L > max(0, -K)".to_string(),
                ));
            }
            let cap = (2.0 / l).min(2.0 / (kappa + l));
            if eps > cap {
                return Err(IntegratorError::InadmissibleStep {
                    eps,
                    requirement: format!("eps <= min(2/L, 2/(K+L)) = {cap}"),
                });
            }
            // f + g is another diagonal quadratic; α is its gradient
            // domination constant.
            let mut sum_curv = Vec::with_capacity(f.dim());
            let mut sum_anchor = Vec::with_capacity(f.dim());
            for i in 0..f.dim() {
                let d = f.curvatures[i] + g.curvatures[i];
                if d <= 0.0 {
                    return Err(IntegratorError::BadInstance(
                        "f + g must be strictly convex".to_string(),
                    ));
                }
                sum_curv.push(d);
                sum_anchor
                    .push((f.curvatures[i] * f.anchors[i] + g.curvatures[i] * g.anchors[i]) / d);
            }
            let alpha = sum_curv.iter().cloned().fold(f64::MAX, f64::min);
            let minimum: f64 = (0..f.dim())
                .map(|i| {
                    let c = sum_anchor[i];
                    0.5 * f.curvatures[i] * (c - f.anchors[i]) * (c - f.anchors[i])
                        + 0.5 * g.curvatures[i] * (c - g.anchors[i]) * (c - g.anchors[i])
                })
                .sum();
            let denominator = 1.0 - 2.0 * eps * kappa * l / (kappa + l);
            let factor = 1.0 / (1.0 + alpha * eps * (2.0 - eps * l) / denominator);

            let total = |x: &[f64]| f.value(x) + g.value(x) - minimum;
            let mut x = x0.to_vec();
            let gap0 = total(&x);
            let mut gaps = vec![gap0];
            let mut bounds = vec![gap0];
            for j in 1..=k {
                f.gd_step(&mut x, eps);
                g.pg_step(&mut x, eps);
                gaps.push(total(&x));
                bounds.push(gap0 * factor.powi(j as i32));
            }
            Ok(RateCheck { gaps, bounds })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseStream;

    const FIELD: LinearField = LinearField {
        lambda: 1.0,
        anchor: 0.7,
    };

    #[test]
    fn table_one_rows() {
        // GD row: x' = (1−ε)x + εa.
        let gd = step_map(IntegratorKind::Forward, &FIELD, 0.3).unwrap();
        assert!((gd.c - 0.7).abs() < 1e-15);
        assert!((gd.d - 0.3 * 0.7).abs() < 1e-15);
        // GF row: x' = e^{-ε}x + (1−e^{-ε})a.
        let gf = step_map(IntegratorKind::Exact, &FIELD, 0.3).unwrap();
        assert!((gf.c - (-0.3f64).exp()).abs() < 1e-15);
        // PG row: x' = x/(1+ε) + εa/(1+ε).
        let pg = step_map(IntegratorKind::Backward, &FIELD, 0.3).unwrap();
        assert!((pg.c - 1.0 / 1.3).abs() < 1e-15);
        assert!((pg.d - 0.3 / 1.3 * 0.7).abs() < 1e-15);
    }

    #[test]
    fn zero_step_is_identity() {
        for kind in IntegratorKind::ALL {
            let m = step_map(kind, &FIELD, 0.0).unwrap();
            assert_eq!(m.c, 1.0);
            assert_eq!(m.d, 0.0);
        }
    }

    #[test]
    fn every_kind_fixes_the_anchor() {
        for kind in IntegratorKind::ALL {
            let m = step_map(kind, &FIELD, 0.17).unwrap();
            assert!((m.apply(FIELD.anchor) - FIELD.anchor).abs() < 1e-15);
        }
    }

    #[test]
    fn compose_coefficients() {
        let fwd = step_map(IntegratorKind::Forward, &LinearField::new(1.0, 0.0), 0.3).unwrap();
        let bwd = step_map(IntegratorKind::Backward, &LinearField::new(1.0, 0.0), 0.3).unwrap();
        let m = compose(fwd, bwd);
        assert!((m.c - 0.7 / 1.3).abs() < 1e-15);
        // Pointwise cross-check of the symbolic product.
        for x in [-2.0, 0.0, 1.0, 5.5] {
            assert!((m.apply(x) - fwd.apply(bwd.apply(x))).abs() < 1e-13);
        }
    }

    #[test]
    fn compose_associative_on_random_triples() {
        let mut stream = NoiseStream::new(1, 0);
        for _ in 0..100 {
            let maps: Vec<AffineStepMap> = (0..3)
                .map(|_| AffineStepMap {
                    c: stream.standard_normal(),
                    d: stream.standard_normal(),
                })
                .collect();
            let left = compose(compose(maps[0], maps[1]), maps[2]);
            let right = compose(maps[0], compose(maps[1], maps[2]));
            assert!((left.c - right.c).abs() < 1e-14);
            assert!((left.d - right.d).abs() < 1e-14);
        }
    }

    #[test]
    fn compose_with_identity() {
        let m = AffineStepMap { c: 0.4, d: -1.2 };
        assert_eq!(compose(m, AffineStepMap::identity()), m);
        assert_eq!(compose(AffineStepMap::identity(), m), m);
    }

    #[test]
    fn adjoint_of_forward_is_backward() {
        let fam = AffineFamily::of_kind(IntegratorKind::Forward, FIELD);
        let adj = fam.adjoint();
        for eps in [0.01, 0.1, 0.37, 0.9] {
            let a = adj.at(eps).unwrap();
            let b = step_map(IntegratorKind::Backward, &FIELD, eps).unwrap();
            assert!((a.c - b.c).abs() < 1e-14, "eps {eps}");
            assert!((a.d - b.d).abs() < 1e-14, "eps {eps}");
        }
    }

    #[test]
    fn exact_flow_is_self_adjoint() {
        let fam = AffineFamily::exact(FIELD);
        let adj = fam.adjoint();
        for eps in [0.05, 0.4, 1.3] {
            let a = fam.at(eps).unwrap();
            let b = adj.at(eps).unwrap();
            assert!((a.c - b.c).abs() < 1e-14);
            assert!((a.d - b.d).abs() < 1e-14);
        }
    }

    #[test]
    fn double_adjoint_is_identity_on_families() {
        let mut stream = NoiseStream::new(6, 0);
        for kind in IntegratorKind::ALL {
            let fam = AffineFamily::of_kind(kind, FIELD);
            let twice = fam.adjoint().adjoint();
            for _ in 0..10 {
                let eps = 0.01 + 0.5 * stream.next_unit();
                let a = fam.at(eps).unwrap();
                let b = twice.at(eps).unwrap();
                assert!((a.c - b.c).abs() < 1e-13);
                assert!((a.d - b.d).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn adjoint_reverses_composition() {
        let f = AffineFamily::of_kind(IntegratorKind::Forward, LinearField::new(0.8, 1.0));
        let g = AffineFamily::of_kind(IntegratorKind::Forward, LinearField::new(1.3, -0.5));
        let lhs = f.compose(&g).adjoint();
        let rhs = g.adjoint().compose(&f.adjoint());
        for eps in [0.05, 0.2, 0.45] {
            let a = lhs.at(eps).unwrap();
            let b = rhs.at(eps).unwrap();
            assert!((a.c - b.c).abs() < 1e-13);
            assert!((a.d - b.d).abs() < 1e-13);
        }
    }

    #[test]
    fn fixed_point_basics() {
        assert_eq!(
            fixed_point(AffineStepMap { c: 0.0, d: 3.5 }).unwrap(),
            3.5
        );
        assert!(matches!(
            fixed_point(AffineStepMap { c: 1.0, d: 0.1 }),
            Err(IntegratorError::NonContractive { .. })
        ));
    }

    #[test]
    fn table_two_gd_gd_cell() {
        let eps = 0.1;
        let lim = composite_limit(CompositeAlg::Gd, CompositeAlg::Gd, eps).unwrap();
        assert!((lim - (-eps / (2.0 - eps))).abs() < 1e-15);
        assert!((lim - (-0.052631578947368425)).abs() < 1e-12);
    }

    #[test]
    fn table_two_unbiased_cells_are_exactly_zero() {
        for eps in [0.05, 0.1, 0.3, 0.7] {
            assert_eq!(
                composite_limit(CompositeAlg::Gd, CompositeAlg::Pg, eps).unwrap(),
                0.0
            );
            assert_eq!(
                composite_limit(CompositeAlg::Pg, CompositeAlg::Gd, eps).unwrap(),
                0.0
            );
        }
    }

    #[test]
    fn table_two_all_cells_match_formulas() {
        for eps in [0.05, 0.1, 0.3] {
            for alg_f in CompositeAlg::ALL {
                for alg_g in CompositeAlg::ALL {
                    let computed = composite_limit(alg_f, alg_g, eps).unwrap();
                    let formula = composite_limit_formula(alg_f, alg_g, eps);
                    assert!(
                        (computed - formula).abs() <= 1e-12,
                        "cell ({}, {}) at eps {eps}: {computed} vs {formula}",
                        alg_f.name(),
                        alg_g.name()
                    );
                }
            }
        }
    }

    #[test]
    fn table_two_gf_gf_cell() {
        let eps = 0.1;
        let em = (-eps as f64).exp();
        let lim = composite_limit(CompositeAlg::Gf, CompositeAlg::Gf, eps).unwrap();
        assert!((lim - (-(1.0 - em) * (1.0 - em) / (1.0 - em * em))).abs() < 1e-13);
    }

    #[test]
    fn table_two_pg_pg_cell() {
        let eps = 0.1;
        let lim = composite_limit(CompositeAlg::Pg, CompositeAlg::Pg, eps).unwrap();
        assert!((lim - eps / (2.0 + eps)).abs() < 1e-13);
        // Self-consistency with the tabulated iteration map.
        let m = composite_step_map(CompositeAlg::Pg, CompositeAlg::Pg, eps).unwrap();
        assert!((m.c - 1.0 / (1.1 * 1.1)).abs() < 1e-15);
        assert!((m.d - eps * eps / (1.1 * 1.1)).abs() < 1e-15);
    }

    #[test]
    fn order_estimates() {
        let x0 = 2.0;
        let fwd = estimate_order(IntegratorKind::Forward, &FIELD, x0).unwrap();
        assert!((fwd.value().unwrap() - 1.0).abs() < 0.05, "{fwd:?}");
        let bwd = estimate_order(IntegratorKind::Backward, &FIELD, x0).unwrap();
        assert!((bwd.value().unwrap() - 1.0).abs() < 0.05, "{bwd:?}");
        let trap = estimate_order(IntegratorKind::Trapezoid, &FIELD, x0).unwrap();
        assert!((trap.value().unwrap() - 2.0).abs() < 0.05, "{trap:?}");
        let mid = estimate_order(IntegratorKind::Midpoint, &FIELD, x0).unwrap();
        assert!((mid.value().unwrap() - 2.0).abs() < 0.05, "{mid:?}");
        let exact = estimate_order(IntegratorKind::Exact, &FIELD, x0).unwrap();
        assert_eq!(exact, OrderEstimate::Exact);
    }

    #[test]
    fn symmetrized_compositions_are_self_adjoint_with_even_order() {
        let fam = AffineFamily::of_kind(IntegratorKind::Forward, FIELD);
        for composed in [
            fam.compose(&fam.adjoint()),
            fam.adjoint().compose(&fam),
        ] {
            let adj = composed.adjoint();
            for eps in [0.05, 0.2, 0.5] {
                let a = composed.at(eps).unwrap();
                let b = adj.at(eps).unwrap();
                assert!((a.c - b.c).abs() < 1e-13);
                assert!((a.d - b.d).abs() < 1e-13);
            }
            // A_ε ∘ A*_ε integrates the doubled field; its order is even.
            let doubled = LinearField::new(2.0 * FIELD.lambda, FIELD.anchor);
            let order = estimate_order_of_family(&composed, &doubled, 2.0).unwrap();
            assert!((order.value().unwrap() - 2.0).abs() < 0.05, "{order:?}");
        }
    }

    #[test]
    fn bias_order_matches_estimated_order() {
        // First-order composite: GD on f then GD on g, an integrator for
        // the superposed contractive field.
        let f_fam = AffineFamily::of_kind(IntegratorKind::Forward, COMPOSITE_FIELD_F);
        let g_fam = AffineFamily::of_kind(IntegratorKind::Forward, COMPOSITE_FIELD_G);
        let composite = g_fam.compose(&f_fam);
        let combined = LinearField::combine(&[COMPOSITE_FIELD_F, COMPOSITE_FIELD_G]);
        let order = estimate_order_of_family(&composite, &combined, 1.7)
            .unwrap()
            .value()
            .unwrap();

        let bias_slope = {
            let mut pts = Vec::new();
            for k in 3..=10 {
                let eps = 0.5f64.powi(k);
                let bias =
                    (fixed_point(composite.at(eps).unwrap()).unwrap() - combined.anchor).abs();
                if bias > 1e-13 {
                    pts.push((eps.ln(), bias.ln()));
                }
            }
            least_squares_slope(&pts)
        };
        assert!((bias_slope - order).abs() < 0.1, "order {order} bias slope {bias_slope}");

        // Symmetrizing the composite doubles the order and the bias slope.
        let sym = composite.rescale(0.5).compose(&composite.adjoint().rescale(0.5));
        let sym_order = estimate_order_of_family(&sym, &combined, 1.7)
            .unwrap()
            .value()
            .unwrap();
        let sym_bias_slope = {
            let mut pts = Vec::new();
            for k in 3..=10 {
                let eps = 0.5f64.powi(k);
                let bias = (fixed_point(sym.at(eps).unwrap()).unwrap() - combined.anchor).abs();
                if bias > 1e-13 {
                    pts.push((eps.ln(), bias.ln()));
                }
            }
            least_squares_slope(&pts)
        };
        assert!((sym_order - 2.0).abs() < 0.1, "sym order {sym_order}");
        assert!(
            (sym_bias_slope - sym_order).abs() < 0.1,
            "sym order {sym_order} bias slope {sym_bias_slope}"
        );
    }

    #[test]
    fn semiconvex_lemma_on_random_quadratic_pairs() {
        let mut stream = NoiseStream::new(14, 0);
        for _ in 0..100 {
            let dim = 2 + (stream.next_u64() % 3) as usize;
            let kappa = -0.5 + 1.5 * stream.next_unit();
            let l = kappa.max(0.0) + 0.5 + stream.next_unit();
            let curv: Vec<f64> = (0..dim)
                .map(|_| kappa + (l - kappa) * stream.next_unit())
                .collect();
            let anchors: Vec<f64> = (0..dim).map(|_| stream.standard_normal()).collect();
            let q = Quadratic::new(curv.clone(), anchors).unwrap();
            let k_eff = q.min_curvature();
            let l_eff = q.max_curvature();
            let eps = 2.0 / (k_eff + l_eff) * stream.next_unit();
            let factor = semiconvex_contraction_factor(k_eff, l_eff, eps);
            let x: Vec<f64> = (0..dim).map(|_| 2.0 * stream.standard_normal()).collect();
            let y: Vec<f64> = (0..dim).map(|_| 2.0 * stream.standard_normal()).collect();
            let mut xe = x.clone();
            let mut ye = y.clone();
            q.gd_step(&mut xe, eps);
            q.gd_step(&mut ye, eps);
            let before: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
            let after: f64 = xe.iter().zip(&ye).map(|(a, b)| (a - b) * (a - b)).sum();
            assert!(after <= factor * before + 1e-12, "factor {factor}");
        }
    }

    #[test]
    fn gd_one_step_convergence_at_critical_step() {
        // Isotropic quadratic, ε = 1/L: the gradient step lands on the
        // minimizer.
        let q = Quadratic::new(vec![2.0, 2.0], vec![1.0, -1.0]).unwrap();
        let check =
            euclidean_rate_check(RateScheme::Gd, &q, None, &[4.0, 4.0], 0.5, 5).unwrap();
        assert!(check.gaps[1] < 1e-25);
        assert!(check.respected(1e-12));
    }

    #[test]
    fn pg_rate_bound() {
        let q = Quadratic::new(vec![0.5], vec![0.0]).unwrap();
        let check = euclidean_rate_check(RateScheme::Pg, &q, None, &[3.0], 0.4, 50).unwrap();
        // Bound sequence is (1 + 0.2)^{-k} times the initial gap.
        assert!((check.bounds[1] / check.bounds[0] - 1.0 / 1.2).abs() < 1e-15);
        assert!(check.respected(0.0));
    }

    #[test]
    fn symmetrized_forward_rate_bound() {
        let q = Quadratic::new(vec![0.5, 1.0, 2.0], vec![0.3, -0.2, 1.4]).unwrap();
        let check =
            euclidean_rate_check(RateScheme::SymmetrizedForward, &q, None, &[5.0, -3.0, 2.0], 0.4, 60)
                .unwrap();
        assert!(check.respected(1e-15));
    }

    #[test]
    fn fb_rate_bound_with_semiconvex_f() {
        let mut stream = NoiseStream::new(21, 0);
        for _ in 0..50 {
            let dim = 1 + (stream.next_u64() % 4) as usize;
            let f_curv: Vec<f64> = (0..dim).map(|_| -0.5 + 1.5 * stream.next_unit()).collect();
            let g_curv: Vec<f64> = (0..dim)
                .map(|_| {
                    // Keep f + g strictly convex.
                    let floor = f_curv[0].min(0.0).abs();
                    floor + 0.2 + 1.5 * stream.next_unit()
                })
                .collect();
            let f = Quadratic::new(
                f_curv,
                (0..dim).map(|_| stream.standard_normal()).collect(),
            )
            .unwrap();
            let g = Quadratic::new(
                g_curv,
                (0..dim).map(|_| stream.standard_normal()).collect(),
            )
            .unwrap();
            let kappa = f.min_curvature();
            let l = f.max_curvature();
            if l <= 0.0_f64.max(-kappa) {
                continue;
            }
            let cap = (2.0 / l).min(2.0 / (kappa + l));
            let eps = 0.9 * cap * (0.1 + 0.9 * stream.next_unit());
            let x0: Vec<f64> = (0..dim).map(|_| 3.0 * stream.standard_normal()).collect();
            let check = euclidean_rate_check(RateScheme::Fb, &f, Some(&g), &x0, eps, 100).unwrap();
            assert!(check.respected(1e-10), "K={kappa} L={l} eps={eps}");
        }
    }
}
