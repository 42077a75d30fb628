//! The experiment registry and per-experiment runners.

use std::path::PathBuf;

use nalgebra::DMatrix;

use super::config::{ExperimentConfig, TargetSpec};
use super::{fmt_f64, write_atomic, Check, CsvTable, ExperimentError};
use crate::flows::{
    heat_backward_step, heat_exact, heat_forward_step, scheme_step, ula_bias, variance_flow,
    SchemeKind, StepSize, FIXED_POINT_MAX_ITER,
};
use crate::integrators::{composite_limit, composite_limit_formula, CompositeAlg};
use crate::measures::{gaussian_w2, GaussianMeasure, GaussianPotential, Potential};
use crate::metrics::{fit_bias_order, moment_match, BiasSweep};
use crate::noise::NoiseStream;
use crate::samplers::{
    run_chain, sla_contraction_factor, synchronous_coupling_run, ula_contraction_factor, Ensemble,
    MixtureTarget, Stepper,
};

/// One registry entry.
#[derive(Debug, Clone)]
pub struct ExperimentInfo {
    pub name: &'static str,
    pub description: &'static str,
    pub needs_scheme: bool,
}

/// All runnable experiments.
pub fn registry() -> Vec<ExperimentInfo> {
    vec![
        ExperimentInfo {
            name: "bias-sweep",
            description:
                "step-size bias of ULA or SLA on a Gaussian target: measured vs closed form, with a log-log slope fit",
            needs_scheme: true,
        },
        ExperimentInfo {
            name: "contraction",
            description:
                "synchronous-coupling mean squared distance per step against the strong-convexity contraction factor",
            needs_scheme: true,
        },
        ExperimentInfo {
            name: "table2",
            description:
                "limit points of the nine composite pairings of gradient/flow/proximal steps against analytic formulas",
            needs_scheme: false,
        },
        ExperimentInfo {
            name: "heat-compare",
            description:
                "forward, backward, and exact heat-flow covariance traces with their bracketing order",
            needs_scheme: false,
        },
        ExperimentInfo {
            name: "mixture-demo",
            description:
                "long-run ULA vs SLA moment comparison on an equal two-Gaussian mixture target",
            needs_scheme: false,
        },
        ExperimentInfo {
            name: "variance-flow",
            description: "exact variance gradient-flow decay check with mean preservation",
            needs_scheme: false,
        },
        ExperimentInfo {
            name: "gaussian-consistency",
            description:
                "fixed-point convergence of the SLA/forward/backward/FB/BF covariance recursions on a Gaussian target",
            needs_scheme: false,
        },
    ]
}

/// Mutable state threaded through one experiment run.
pub struct Run<'a> {
    pub config: &'a ExperimentConfig,
    pub hash: String,
    pub out_dir: PathBuf,
    pub checks: Vec<Check>,
    pub files: Vec<PathBuf>,
}

impl Run<'_> {
    fn write_csv(&mut self, name: &str, table: &CsvTable) -> Result<(), ExperimentError> {
        let path = self.out_dir.join(name);
        write_atomic(&path, &table.contents())?;
        self.files.push(path);
        Ok(())
    }

    fn stepper(&self) -> Result<Stepper, ExperimentError> {
        match self.config.scheme.as_deref() {
            Some("ula") => Ok(Stepper::Ula),
            Some("sla") => Ok(Stepper::Sla),
            Some("backward-flow") => Ok(Stepper::BackwardFlow),
            other => Err(ExperimentError::InvalidConfig(format!(
                "expected sampler scheme 'ula', 'sla', or 'backward-flow', got {other:?}"
            ))),
        }
    }
}

pub fn dispatch(run: &mut Run) -> Result<(), ExperimentError> {
    match run.config.experiment.as_str() {
        "bias-sweep" => bias_sweep(run),
        "contraction" => contraction(run),
        "table2" => table2(run),
        "heat-compare" => heat_compare(run),
        "mixture-demo" => mixture_demo(run),
        "variance-flow" => variance_flow_experiment(run),
        "gaussian-consistency" => gaussian_consistency(run),
        other => Err(ExperimentError::UnknownExperiment(other.to_string())),
    }
}

/// Measured bias of a particle run: W2 between the moment-matched final
/// ensemble and the target.
fn measured_bias(
    stepper: Stepper,
    pot: &dyn Potential,
    nu: &GaussianMeasure,
    particles: usize,
    steps: usize,
    eps: StepSize,
    seed: u64,
) -> Result<f64, ExperimentError> {
    let mut init = NoiseStream::new(seed, u64::MAX);
    let dim = nu.dim();
    let ens = Ensemble::gaussian(
        nu.mean().as_slice(),
        &vec![1.0; dim],
        particles,
        &mut init,
    )?;
    let out = run_chain(stepper, pot, ens, eps, steps, seed, None)?;
    let matched = moment_match(&out.ensemble)?;
    Ok(gaussian_w2(&matched, nu)?)
}

/// Monte-Carlo noise floor for the bias estimate at this sample size:
/// three times the batch-means standard error of the null measurement
/// (exact samples from the target, same estimator).
fn bias_noise_floor(
    nu: &GaussianMeasure,
    particles: usize,
    seed: u64,
) -> Result<f64, ExperimentError> {
    let batches = 8usize;
    let per_batch = (particles / batches).max(4);
    let dim = nu.dim();
    let variances: Vec<f64> = (0..dim).map(|i| nu.covariance()[(i, i)]).collect();
    let mut stream = NoiseStream::new(seed ^ 0x5EED_F100_F100_5EED, 0);
    let mut biases = Vec::with_capacity(batches);
    for _ in 0..batches {
        // Diagonal draw is exact for diagonal targets and a conservative
        // stand-in otherwise.
        let ens = Ensemble::gaussian(nu.mean().as_slice(), &variances, per_batch, &mut stream)?;
        let matched = moment_match(&ens)?;
        biases.push(gaussian_w2(&matched, nu)?);
    }
    let mean = biases.iter().sum::<f64>() / batches as f64;
    // Null biases at batch size n/B sit √B above the full-sample level.
    Ok(3.0 * mean / (batches as f64).sqrt())
}

fn bias_sweep(run: &mut Run) -> Result<(), ExperimentError> {
    let nu = run.config.target.gaussian()?;
    let pot = GaussianPotential::new(&nu);
    let stepper = run.stepper()?;
    let epsilons = run.config.epsilon.values();
    let seed = run.config.seed;

    let mut table = CsvTable::new(
        &run.hash,
        seed,
        &["epsilon", "measured_bias", "closed_form_bias", "noise_floor"],
    );
    let mut closed_forms = Vec::new();
    let mut measured = Vec::new();
    let mut floors = Vec::new();
    for (i, &e) in epsilons.iter().enumerate() {
        let eps = StepSize::new(e)?;
        let closed = match stepper {
            Stepper::Ula => ula_bias(&nu, eps)?,
            // SLA and the proximal variant admit exact stationary laws only
            // for SLA; its closed-form bias is zero.
            Stepper::Sla => 0.0,
            Stepper::BackwardFlow => {
                return Err(ExperimentError::InvalidConfig(
                    "bias-sweep supports schemes 'ula' and 'sla'".to_string(),
                ))
            }
        };
        let m = measured_bias(
            stepper,
            &pot,
            &nu,
            run.config.particles,
            run.config.steps,
            eps,
            seed.wrapping_add(i as u64),
        )?;
        let floor = bias_noise_floor(&nu, run.config.particles, seed.wrapping_add(i as u64))?;
        table.row(&[fmt_f64(e), fmt_f64(m), fmt_f64(closed), fmt_f64(floor)]);
        closed_forms.push(closed);
        measured.push(m);
        floors.push(floor);
    }
    run.write_csv("bias-sweep.csv", &table)?;

    match stepper {
        Stepper::Ula => {
            let sweep = BiasSweep::new(epsilons.clone(), closed_forms.clone())?;
            let fit = fit_bias_order(&sweep)?;
            run.checks
                .push(Check::in_range("closed-form-slope", fit.slope, 0.95, 1.05));
            let coeff_target = 0.25 * nu.precision().trace().sqrt();
            let coeff = closed_forms[0] / epsilons[0];
            run.checks.push(Check::in_range(
                "leading-coefficient",
                coeff,
                0.9 * coeff_target,
                1.1 * coeff_target,
            ));
            for i in 0..epsilons.len() {
                run.checks.push(Check::upper(
                    format!("measured-matches-closed-form[{}]", epsilons[i]),
                    (measured[i] - closed_forms[i]).abs(),
                    floors[i] + 0.25 * closed_forms[i],
                ));
            }
        }
        Stepper::Sla => {
            // Consistency verdict: every measured bias sits below the
            // Monte-Carlo noise floor, so a slope fit is refused.
            let worst = measured
                .iter()
                .zip(&floors)
                .map(|(m, f)| m / f)
                .fold(0.0f64, f64::max);
            run.checks
                .push(Check::upper("sla-consistent (bias/floor)", worst, 1.0));
        }
        Stepper::BackwardFlow => unreachable!(),
    }
    Ok(())
}

fn contraction(run: &mut Run) -> Result<(), ExperimentError> {
    let seed = run.config.seed;
    let stepper = run.stepper()?;
    let epsilons = run.config.epsilon.values();
    if epsilons.len() != 1 {
        return Err(ExperimentError::InvalidConfig(
            "contraction takes a single epsilon".to_string(),
        ));
    }
    let e = epsilons[0];

    let (pot, alpha, smooth, dim): (Box<dyn Potential>, f64, f64, usize) =
        match &run.config.target {
            TargetSpec::Gaussian { .. } => {
                let nu = run.config.target.gaussian()?;
                let pot = GaussianPotential::new(&nu);
                let (a, l) = (nu.log_concavity(), nu.log_smoothness());
                (Box::new(pot), a, l, nu.dim())
            }
            TargetSpec::Mixture { a } => {
                let target = MixtureTarget::new(a.clone());
                let alpha = target.strong_convexity().ok_or_else(|| {
                    ExperimentError::InvalidConfig(
                        "mixture contraction requires |a| < 1 (strong log-concavity)".to_string(),
                    )
                })?;
                let dim = target.dim();
                (Box::new(target), alpha, 1.0, dim)
            }
        };
    let cap = 2.0 / (alpha + smooth);
    if e > cap {
        return Err(ExperimentError::InvalidConfig(format!(
            "epsilon {e} exceeds the contraction regime 2/(alpha+L) = {cap}"
        )));
    }
    let factor = match stepper {
        Stepper::Ula => ula_contraction_factor(alpha, smooth, e),
        Stepper::Sla => sla_contraction_factor(alpha, smooth, e),
        Stepper::BackwardFlow => {
            return Err(ExperimentError::InvalidConfig(
                "contraction supports schemes 'ula' and 'sla'".to_string(),
            ))
        }
    };

    let mut init = NoiseStream::new(seed ^ 0xC0_FFEE, 0);
    let a = Ensemble::gaussian(&vec![2.0; dim], &vec![0.25; dim], run.config.particles, &mut init)?;
    let b = Ensemble::gaussian(&vec![-2.0; dim], &vec![0.25; dim], run.config.particles, &mut init)?;
    let eps = StepSize::new(e)?;
    let msd = synchronous_coupling_run(stepper, pot.as_ref(), a, b, eps, run.config.steps, seed)?;

    let mut table = CsvTable::new(&run.hash, seed, &["step", "msd", "bound"]);
    let mut worst_ratio = 0.0f64;
    let mut worst_vs_bound = 0.0f64;
    for (k, &d) in msd.iter().enumerate() {
        let bound = msd[0] * factor.powi(k as i32);
        table.row(&[k.to_string(), fmt_f64(d), fmt_f64(bound)]);
        if k > 0 && msd[k - 1] > 1e-250 {
            worst_ratio = worst_ratio.max(d / msd[k - 1]);
        }
        if bound > 1e-250 {
            worst_vs_bound = worst_vs_bound.max(d / bound);
        }
    }
    run.write_csv("contraction.csv", &table)?;
    run.checks.push(Check::upper(
        "per-step-ratio <= factor",
        worst_ratio,
        factor + 1e-12,
    ));
    run.checks.push(Check::upper(
        "msd within k-step bound",
        worst_vs_bound,
        1.0 + 1e-9,
    ));
    Ok(())
}

fn table2(run: &mut Run) -> Result<(), ExperimentError> {
    let mut table = CsvTable::new(
        &run.hash,
        run.config.seed,
        &["epsilon", "alg_f", "alg_g", "computed", "formula", "abs_err"],
    );
    let mut worst = 0.0f64;
    let mut worst_zero_cell = 0.0f64;
    for &e in &run.config.epsilon.values() {
        for alg_f in CompositeAlg::ALL {
            for alg_g in CompositeAlg::ALL {
                let computed = composite_limit(alg_f, alg_g, e)?;
                let formula = composite_limit_formula(alg_f, alg_g, e);
                let err = (computed - formula).abs();
                worst = worst.max(err);
                let unbiased_pairing = matches!(
                    (alg_f, alg_g),
                    (CompositeAlg::Gd, CompositeAlg::Pg) | (CompositeAlg::Pg, CompositeAlg::Gd)
                );
                if unbiased_pairing {
                    worst_zero_cell = worst_zero_cell.max(computed.abs());
                }
                table.row(&[
                    fmt_f64(e),
                    alg_f.name().to_string(),
                    alg_g.name().to_string(),
                    fmt_f64(computed),
                    fmt_f64(formula),
                    fmt_f64(err),
                ]);
            }
        }
    }
    run.write_csv("table2.csv", &table)?;
    run.checks
        .push(Check::upper("max |computed - formula|", worst, 1e-12));
    run.checks.push(Check::upper(
        "unbiased pairings exactly zero",
        worst_zero_cell,
        0.0,
    ));
    Ok(())
}

fn heat_compare(run: &mut Run) -> Result<(), ExperimentError> {
    let rho0 = run.config.target.gaussian()?;
    let epsilons = run.config.epsilon.values();
    if epsilons.len() != 1 {
        return Err(ExperimentError::InvalidConfig(
            "heat-compare takes a single epsilon".to_string(),
        ));
    }
    let e = epsilons[0];
    let eps = StepSize::new(e)?;
    let lam_min = rho0.spectrum().lambda_min();
    if e > lam_min {
        return Err(ExperimentError::InvalidConfig(format!(
            "backward heat step requires epsilon <= lambda_min(Sigma0) = {lam_min}"
        )));
    }

    let mut table = CsvTable::new(
        &run.hash,
        run.config.seed,
        &["k", "trace_forward", "trace_exact", "trace_backward"],
    );
    let mut fwd = rho0.clone();
    let mut bwd = rho0.clone();
    // Most positive eigenvalue of (exact − forward) and (backward − exact):
    // bracketing in the Loewner order means both stay negative.
    let mut worst_forward = f64::MIN;
    let mut worst_backward = f64::MIN;
    table.row(&[
        "0".to_string(),
        fmt_f64(fwd.covariance().trace()),
        fmt_f64(rho0.covariance().trace()),
        fmt_f64(bwd.covariance().trace()),
    ]);
    for k in 1..=run.config.steps {
        fwd = heat_forward_step(&fwd, eps)?;
        bwd = heat_backward_step(&bwd, eps)?;
        let exact = heat_exact(&rho0, e * k as f64)?;
        let fwd_gap = (exact.covariance() - fwd.covariance())
            .symmetric_eigen()
            .eigenvalues
            .max();
        let bwd_gap = (bwd.covariance() - exact.covariance())
            .symmetric_eigen()
            .eigenvalues
            .max();
        worst_forward = worst_forward.max(fwd_gap);
        worst_backward = worst_backward.max(bwd_gap);
        table.row(&[
            k.to_string(),
            fmt_f64(fwd.covariance().trace()),
            fmt_f64(exact.covariance().trace()),
            fmt_f64(bwd.covariance().trace()),
        ]);
    }
    run.write_csv("heat-compare.csv", &table)?;
    run.checks.push(Check::upper(
        "forward dominates exact (max eig of exact - forward)",
        worst_forward,
        0.0,
    ));
    run.checks.push(Check::upper(
        "backward dominated by exact (max eig of backward - exact)",
        worst_backward,
        0.0,
    ));
    Ok(())
}

fn mixture_demo(run: &mut Run) -> Result<(), ExperimentError> {
    let offset = match &run.config.target {
        TargetSpec::Mixture { a } => a.clone(),
        TargetSpec::Gaussian { .. } => {
            return Err(ExperimentError::InvalidConfig(
                "mixture-demo requires a mixture target".to_string(),
            ))
        }
    };
    let target = MixtureTarget::new(offset);
    let epsilons = run.config.epsilon.values();
    if epsilons.len() != 1 {
        return Err(ExperimentError::InvalidConfig(
            "mixture-demo takes a single epsilon".to_string(),
        ));
    }
    let e = epsilons[0];
    if e * target.offset_norm_sq() >= 1.0 + e {
        return Err(ExperimentError::InvalidConfig(
            "mixture SLA requires eps*|a|^2 < 1 + eps".to_string(),
        ));
    }
    let eps = StepSize::new(e)?;
    let dim = target.dim();
    let true_cov = target.true_covariance();
    let true_cov_mat = DMatrix::from_fn(dim, dim, |i, j| true_cov[i][j]);

    let mut table = CsvTable::new(
        &run.hash,
        run.config.seed,
        &["scheme", "mean_error", "cov_error"],
    );
    let tolerance = (0.1f64).max(6.0 / (run.config.particles as f64).sqrt());
    for (name, stepper) in [("ula", Stepper::Ula), ("sla", Stepper::Sla)] {
        let mut init = NoiseStream::new(run.config.seed ^ 0xA11CE, 1 << 42);
        let ens = Ensemble::gaussian(
            &vec![0.0; dim],
            &vec![1.0; dim],
            run.config.particles,
            &mut init,
        )?;
        let out = run_chain(
            stepper,
            &target,
            ens,
            eps,
            run.config.steps,
            run.config.seed,
            None,
        )?;
        let matched = moment_match(&out.ensemble)?;
        let mean_err = matched.mean().norm();
        let cov_err = (matched.covariance() - &true_cov_mat).norm();
        table.row(&[name.to_string(), fmt_f64(mean_err), fmt_f64(cov_err)]);
        run.checks.push(Check::upper(
            format!("{name} mean error"),
            mean_err,
            tolerance,
        ));
        run.checks.push(Check::upper(
            format!("{name} covariance error"),
            cov_err,
            tolerance * (1.0 + target.offset_norm_sq()),
        ));
    }
    run.write_csv("mixture-demo.csv", &table)?;
    Ok(())
}

fn variance_flow_experiment(run: &mut Run) -> Result<(), ExperimentError> {
    let rho0 = run.config.target.gaussian()?;
    let epsilons = run.config.epsilon.values();
    if epsilons.len() != 1 {
        return Err(ExperimentError::InvalidConfig(
            "variance-flow takes a single epsilon (the time increment)".to_string(),
        ));
    }
    let dt = epsilons[0];
    let mut table = CsvTable::new(
        &run.hash,
        run.config.seed,
        &["t", "variance_trace", "expected_trace", "mean_drift"],
    );
    let mut worst_var = 0.0f64;
    let mut worst_mean = 0.0f64;
    for k in 0..=run.config.steps {
        let t = dt * k as f64;
        let out = variance_flow(&rho0, t)?;
        let expected = rho0.covariance() * (-4.0 * t).exp();
        let var_err = (out.covariance() - &expected).norm();
        let mean_drift = (out.mean() - rho0.mean()).norm();
        worst_var = worst_var.max(var_err);
        worst_mean = worst_mean.max(mean_drift);
        table.row(&[
            fmt_f64(t),
            fmt_f64(out.covariance().trace()),
            fmt_f64(expected.trace()),
            fmt_f64(mean_drift),
        ]);
    }
    run.write_csv("variance-flow.csv", &table)?;
    run.checks.push(Check::upper(
        "max |Var(rho_t) - e^{-4t} Var(rho_0)|",
        worst_var,
        1e-12,
    ));
    run.checks
        .push(Check::upper("max mean drift", worst_mean, 0.0));
    Ok(())
}

fn gaussian_consistency(run: &mut Run) -> Result<(), ExperimentError> {
    let nu = run.config.target.gaussian()?;
    let epsilons = run.config.epsilon.values();
    if epsilons.len() != 1 {
        return Err(ExperimentError::InvalidConfig(
            "gaussian-consistency takes a single epsilon".to_string(),
        ));
    }
    let eps = StepSize::new(epsilons[0])?;
    let dim = nu.dim();
    let rho0 = GaussianMeasure::new(
        nu.mean().add_scalar(1.0),
        DMatrix::identity(dim, dim),
    )?;

    let mut table = CsvTable::new(
        &run.hash,
        run.config.seed,
        &["scheme", "iterations", "final_w2", "stay_w2"],
    );
    let schemes = [
        SchemeKind::Sla,
        SchemeKind::Forward,
        SchemeKind::Backward,
        SchemeKind::Fb,
        SchemeKind::Bf,
    ];
    for kind in schemes {
        let mut current = rho0.clone();
        let mut iterations = 0usize;
        let mut final_w2 = gaussian_w2(&current, &nu)?;
        while final_w2 > 1e-10 && iterations < FIXED_POINT_MAX_ITER {
            current = scheme_step(kind, &nu, &current, eps)?;
            iterations += 1;
            final_w2 = gaussian_w2(&current, &nu)?;
        }
        let stay = gaussian_w2(&scheme_step(kind, &nu, &nu, eps)?, &nu)?;
        table.row(&[
            kind.name().to_string(),
            iterations.to_string(),
            fmt_f64(final_w2),
            fmt_f64(stay),
        ]);
        run.checks.push(Check::upper(
            format!("{} converges (W2)", kind.name()),
            final_w2,
            1e-10,
        ));
        run.checks.push(Check::upper(
            format!("{} stays at target (W2)", kind.name()),
            stay,
            1e-12,
        ));
    }
    run.write_csv("gaussian-consistency.csv", &table)?;
    Ok(())
}
