//! Gradient descent and damped Newton iteration with critical-point
//! verification and Hessian-based classification.
//!
//! Gradient descent uses Armijo backtracking (halving) with step recovery,
//! so accepted steps never increase the loss. Newton iterates the full
//! (shift-damped) system and deliberately converges to critical points of
//! any index; there is no globalization that would bias it toward minima.
//!
//! Fully degenerate critical points (all derivatives up to high order
//! vanishing, e.g. the all-zero configurations) make `grad_tol` alone a bad
//! stopping rule: Newton contracts toward them geometrically with the
//! gradient still shrinking every step. Convergence therefore requires the
//! gradient tolerance *and* a stalled step (or a gradient that has stopped
//! improving below the tolerance), which lets those points be polished to
//! coordinate accuracy far below the isotropy tolerance.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{norm2, sym_eigen};
use crate::losses::{Configuration, LossError, LossInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gd,
    Newton,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    pub method: Method,
    /// Initial gradient-descent step; backtracking halves it per trial and
    /// doubles it after accepted steps.
    #[serde(default = "default_gd_step")]
    pub gd_step: f64,
    #[serde(default = "default_max_iters_gd")]
    pub max_iters: usize,
    #[serde(default = "default_grad_tol_gd")]
    pub grad_tol: f64,
    /// Newton convergence also needs the last step at most this long.
    #[serde(default = "default_step_tol")]
    pub step_tol: f64,
    /// `min |λ| < singular_ratio · max |λ|` triggers damping.
    #[serde(default = "default_singular_ratio")]
    pub singular_ratio: f64,
    /// Damping shift is `damping_scale · max |λ|`.
    #[serde(default = "default_damping_scale")]
    pub damping_scale: f64,
    /// Newton steps are rescaled to at most this norm.
    #[serde(default = "default_step_cap")]
    pub newton_step_cap: f64,
}

fn default_gd_step() -> f64 {
    1e-3
}
fn default_max_iters_gd() -> usize {
    100_000
}
fn default_grad_tol_gd() -> f64 {
    1e-8
}
fn default_step_tol() -> f64 {
    1e-9
}
fn default_singular_ratio() -> f64 {
    1e-10
}
fn default_damping_scale() -> f64 {
    1e-8
}
fn default_step_cap() -> f64 {
    1.0
}

impl OptimizerSettings {
    pub fn gd() -> Self {
        Self {
            method: Method::Gd,
            gd_step: default_gd_step(),
            max_iters: default_max_iters_gd(),
            grad_tol: default_grad_tol_gd(),
            step_tol: default_step_tol(),
            singular_ratio: default_singular_ratio(),
            damping_scale: default_damping_scale(),
            newton_step_cap: default_step_cap(),
        }
    }

    pub fn newton() -> Self {
        Self {
            method: Method::Newton,
            max_iters: 200,
            grad_tol: 1e-10,
            ..Self::gd()
        }
        .with_method(Method::Newton)
    }

    fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn validate(&self) -> Result<(), OptimizeError> {
        if self.grad_tol <= 0.0 || self.step_tol <= 0.0 || self.gd_step <= 0.0 {
            return Err(OptimizeError::InvalidSettings("tolerances must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(OptimizeError::InvalidSettings("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Minimum,
    Saddle,
    Degenerate,
}

/// A converged critical point with its Hessian spectrum and provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticalPointRecord {
    pub config: Configuration,
    pub loss: f64,
    pub grad_norm: f64,
    /// Eigenvalues sorted ascending.
    pub hess_spectrum: Vec<f64>,
    pub classification: Classification,
    pub null_count: usize,
    pub method: Method,
    pub seed: u64,
    pub iterations: usize,
}

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error("no convergence after {iterations} iterations (gradient norm {grad_norm:e})")]
    NonConvergence { iterations: usize, grad_norm: f64 },
    #[error("iterates diverged after {iterations} iterations")]
    NumericOverflow { iterations: usize },
    #[error("Newton damping failed {0} consecutive times on a singular Hessian")]
    SingularHessian(usize),
    #[error("invalid optimizer settings: {0}")]
    InvalidSettings(String),
    #[error(transparent)]
    Loss(#[from] LossError),
}

const ARMIJO_C1: f64 = 1e-4;
const DIVERGENCE_NORM: f64 = 1e8;
const MIN_STEP: f64 = 1e-300;
/// Consecutive sub-tolerance iterations without gradient improvement that
/// count as having reached the numeric noise floor.
const POLISH_WINDOW: usize = 5;
const DAMPING_ATTEMPTS: usize = 5;

/// Loss for line-search candidates: a near-singular repulsive evaluation
/// rejects the step instead of aborting the run.
fn loss_or_inf(instance: &LossInstance, x: &Configuration) -> Result<f64, LossError> {
    match instance.loss(x) {
        Ok(v) => Ok(v),
        Err(LossError::Kernel(crate::kernels::KernelError::NearSingularity { .. })) => {
            Ok(f64::INFINITY)
        }
        Err(e) => Err(e),
    }
}

/// Dispatches on `settings.method`.
pub fn run(
    instance: &LossInstance,
    x0: Configuration,
    settings: &OptimizerSettings,
) -> Result<CriticalPointRecord, OptimizeError> {
    match settings.method {
        Method::Gd => descend(instance, x0, settings),
        Method::Newton => newton(instance, x0, settings),
    }
}

/// Gradient descent with Armijo backtracking. Accepted steps never increase
/// the loss; convergence is `‖∇L‖ ≤ grad_tol`.
pub fn descend(
    instance: &LossInstance,
    x0: Configuration,
    settings: &OptimizerSettings,
) -> Result<CriticalPointRecord, OptimizeError> {
    settings.validate()?;
    let mut x = x0;
    let (mut loss, mut grad) = instance.loss_grad(&x)?;
    let mut step = settings.gd_step;
    for iter in 0..=settings.max_iters {
        let grad_norm = norm2(&grad);
        if !loss.is_finite() || norm2(&x.values) > DIVERGENCE_NORM {
            return Err(OptimizeError::NumericOverflow { iterations: iter });
        }
        if grad_norm <= settings.grad_tol {
            return finish(instance, x, loss, grad_norm, Method::Gd, iter);
        }
        if iter == settings.max_iters {
            break;
        }
        let mut accepted = None;
        while step >= MIN_STEP {
            let cand = Configuration {
                values: x
                    .values
                    .iter()
                    .zip(&grad)
                    .map(|(xv, gv)| xv - step * gv)
                    .collect(),
                geometry: x.geometry,
            };
            let cand_loss = loss_or_inf(instance, &cand)?;
            // strict decrease guards against accepting steps whose Armijo
            // margin has fallen below the float resolution of the loss
            if cand_loss < loss && cand_loss <= loss - ARMIJO_C1 * step * grad_norm * grad_norm {
                accepted = Some((cand, cand_loss));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, cand_loss)) = accepted else {
            // the line search cannot make progress at this gradient norm
            return Err(OptimizeError::NonConvergence { iterations: iter, grad_norm });
        };
        debug_assert!(cand_loss <= loss, "accepted GD steps never increase the loss");
        x = cand;
        loss = cand_loss;
        grad = instance.loss_grad(&x)?.1;
        step *= 2.0;
    }
    let grad_norm = norm2(&grad);
    Err(OptimizeError::NonConvergence { iterations: settings.max_iters, grad_norm })
}

/// Damped Newton iteration converging to critical points of any index.
///
/// Near-singular systems (`min|λ| < singular_ratio·max|λ|`) are shifted by
/// `damping_scale·max|λ|·I` before solving, and steps are capped at
/// `newton_step_cap`.
pub fn newton(
    instance: &LossInstance,
    x0: Configuration,
    settings: &OptimizerSettings,
) -> Result<CriticalPointRecord, OptimizeError> {
    settings.validate()?;
    let mut x = x0;
    let mut last_step = f64::INFINITY;
    let mut best_subtol = f64::INFINITY;
    let mut stalled = 0usize;
    let mut damping_failures = 0usize;
    for iter in 0..=settings.max_iters {
        let (loss, grad, hess) = instance.loss_grad_hess(&x)?;
        let grad_norm = norm2(&grad);
        if !loss.is_finite() || norm2(&x.values) > DIVERGENCE_NORM {
            return Err(OptimizeError::NumericOverflow { iterations: iter });
        }
        if grad_norm <= settings.grad_tol {
            if last_step <= settings.step_tol || iter == settings.max_iters {
                return finish(instance, x, loss, grad_norm, Method::Newton, iter);
            }
            // polish until the gradient stops improving below tolerance
            if grad_norm >= 0.5 * best_subtol {
                stalled += 1;
                if stalled >= POLISH_WINDOW {
                    return finish(instance, x, loss, grad_norm, Method::Newton, iter);
                }
            } else {
                stalled = 0;
            }
            best_subtol = best_subtol.min(grad_norm);
        }
        if iter == settings.max_iters {
            return Err(OptimizeError::NonConvergence { iterations: iter, grad_norm });
        }

        let eig = sym_eigen(&hess);
        let scale = eig.max_abs_eigenvalue();
        let mut shift = if eig.min_abs_eigenvalue() < settings.singular_ratio * scale {
            settings.damping_scale * (scale + 1e-30)
        } else {
            0.0
        };
        let neg_grad: Vec<f64> = grad.iter().map(|g| -g).collect();
        let mut delta = eig.solve_shifted(&neg_grad, shift);
        let mut attempts = 0;
        while !delta.iter().all(|d| d.is_finite()) {
            attempts += 1;
            damping_failures += 1;
            if damping_failures >= DAMPING_ATTEMPTS {
                return Err(OptimizeError::SingularHessian(damping_failures));
            }
            shift = (shift.max(1e-20)) * 100.0;
            delta = eig.solve_shifted(&neg_grad, shift);
            if attempts >= DAMPING_ATTEMPTS {
                return Err(OptimizeError::SingularHessian(attempts));
            }
        }
        if delta.iter().all(|d| d.is_finite()) && attempts == 0 {
            damping_failures = 0;
        }
        let step_norm = norm2(&delta);
        let cap = settings.newton_step_cap;
        let factor = if step_norm > cap { cap / step_norm } else { 1.0 };
        for (xv, d) in x.values.iter_mut().zip(&delta) {
            *xv += factor * d;
        }
        last_step = step_norm.min(cap);
    }
    unreachable!("loop returns on every path")
}

fn finish(
    instance: &LossInstance,
    config: Configuration,
    loss: f64,
    grad_norm: f64,
    method: Method,
    iterations: usize,
) -> Result<CriticalPointRecord, OptimizeError> {
    let (classification, null_count, spectrum) = classify(instance, &config)?;
    Ok(CriticalPointRecord {
        config,
        loss,
        grad_norm,
        hess_spectrum: spectrum,
        classification,
        null_count,
        method,
        seed: 0,
        iterations,
    })
}

/// Classification from an already-computed spectrum: a minimum has no
/// eigenvalue below `-zero_tol` and at least one above; symmetry-induced
/// zero modes land in the null count, not the sign counts.
pub fn classify_spectrum(spectrum: &[f64]) -> (Classification, usize) {
    let max_abs = spectrum.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let zero_tol = 1e-6 * (1.0 + max_abs);
    let has_negative = spectrum.iter().any(|&l| l < -zero_tol);
    let has_positive = spectrum.iter().any(|&l| l > zero_tol);
    let null_count = spectrum.iter().filter(|l| l.abs() <= zero_tol).count();
    let classification = if has_negative {
        Classification::Saddle
    } else if has_positive {
        Classification::Minimum
    } else {
        Classification::Degenerate
    };
    (classification, null_count)
}

/// Eigen-decomposes the Hessian at `config` and classifies the point.
pub fn classify(
    instance: &LossInstance,
    config: &Configuration,
) -> Result<(Classification, usize, Vec<f64>), OptimizeError> {
    let (_, _, hess) = instance.loss_grad_hess(config)?;
    let spectrum = sym_eigen(&hess).values;
    let (classification, null_count) = classify_spectrum(&spectrum);
    Ok((classification, null_count, spectrum))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Kernel;
    use crate::losses::{Gauge, Geometry, LossInstance, OCTAHEDRAL_EDGES};

    fn octahedral_instance() -> LossInstance {
        LossInstance::graph_edge_pairs(
            6,
            &OCTAHEDRAL_EDGES,
            Kernel::inner_power_pair(6, 4, 7.0).unwrap(),
        )
        .unwrap()
    }

    /// GD tolerance matched to the loss scale (~3e4): float resolution caps
    /// the reachable gradient norm near 2e-3 on this instance.
    fn octahedral_gd_settings() -> OptimizerSettings {
        let mut s = OptimizerSettings::gd();
        s.grad_tol = 1e-2;
        s
    }

    #[test]
    fn newton_is_exact_on_a_positive_quadratic() {
        // one particle, κ = <x,x>: L = ‖x‖², Hessian 2I
        let inst =
            LossInstance::particle_pairs(1, Kernel::inner_power(1).unwrap(), Gauge::None, true)
                .unwrap();
        // start inside the step cap so the single exact step is not clipped
        let x0 = Configuration::new(vec![0.3, -0.2], inst.geometry()).unwrap();
        let rec = newton(&inst, x0, &OptimizerSettings::newton()).unwrap();
        assert!(rec.iterations <= 2, "one Newton step plus the convergence check");
        assert!(rec.loss.abs() < 1e-20);
        assert!(rec.grad_norm < 1e-10);
        assert_eq!(rec.classification, Classification::Minimum);
    }

    #[test]
    fn quartic_origin_is_degenerate() {
        // L = (‖x‖²)²: gradient and Hessian vanish at the origin
        let inst =
            LossInstance::particle_pairs(1, Kernel::inner_power(2).unwrap(), Gauge::None, true)
                .unwrap();
        let x0 = Configuration::new(vec![0.4, -0.3], inst.geometry()).unwrap();
        let rec = newton(&inst, x0, &OptimizerSettings::newton()).unwrap();
        assert!(rec.loss.abs() < 1e-30);
        assert_eq!(rec.classification, Classification::Degenerate);
        assert!(
            crate::linalg::norm_inf(&rec.config.values) < 1e-7,
            "degenerate points get polished well below the isotropy tolerance: {:?}",
            rec.config.values
        );
    }

    #[test]
    fn gd_finds_the_uniform_octahedral_minimum() {
        let inst = octahedral_instance();
        let x0 = Configuration::constant(1.0, inst.geometry());
        let rec = descend(&inst, x0, &octahedral_gd_settings()).unwrap();
        let expect_v = ((14.0f64 / 3.0).sqrt() / 2.0).sqrt();
        for &v in &rec.config.values {
            assert!((v - expect_v).abs() < 1e-7, "{v} vs {expect_v}");
        }
        assert!((rec.loss - -790272.0 / 27.0).abs() < 1e-4);
        assert_eq!(rec.classification, Classification::Minimum);
        assert_eq!(rec.method, Method::Gd);
    }

    #[test]
    fn already_converged_start_returns_immediately() {
        let inst = octahedral_instance();
        let expect_v = ((14.0f64 / 3.0).sqrt() / 2.0).sqrt();
        // converge once, then restart from the result
        let first = descend(
            &inst,
            Configuration::constant(1.0, inst.geometry()),
            &octahedral_gd_settings(),
        )
        .unwrap();
        let again = descend(&inst, first.config.clone(), &octahedral_gd_settings()).unwrap();
        assert_eq!(again.iterations, 0);
        assert!((again.config.values[0] - expect_v).abs() < 1e-8);
    }

    #[test]
    fn newton_reaches_the_fully_degenerate_zero_configuration() {
        let inst = octahedral_instance();
        let x0 = Configuration::new(
            vec![0.21, -0.33, 0.11, 0.04, -0.15, 0.27],
            inst.geometry(),
        )
        .unwrap();
        let rec = newton(&inst, x0, &OptimizerSettings::newton()).unwrap();
        assert!(rec.loss.abs() < 1e-6, "loss {}", rec.loss);
        assert!(
            crate::linalg::norm_inf(&rec.config.values) < 1e-7,
            "zero configuration pinned: {:?}",
            rec.config.values
        );
        assert_ne!(rec.classification, Classification::Minimum);
    }

    #[test]
    fn newton_converges_to_saddles_of_the_particle_loss() {
        let inst = LossInstance::particle_pairs(
            4,
            Kernel::distance_power(6, 4, 1.0).unwrap(),
            Gauge::None,
            true,
        )
        .unwrap();
        // all particles coincident: loss 0, not a minimum of the landscape,
        // yet a critical manifold Newton can settle on
        let x0 = Configuration::new(
            vec![0.31, 0.30, 0.29, 0.31, 0.30, 0.29, 0.31, 0.30],
            inst.geometry(),
        )
        .unwrap();
        let rec = newton(&inst, x0, &OptimizerSettings::newton()).unwrap();
        assert!(rec.grad_norm <= 1e-10 || rec.loss.abs() < 1e-12);
    }

    #[test]
    fn classify_counts_continuous_nulls_at_the_particle_minimum() {
        let inst = LossInstance::particle_pairs(
            4,
            Kernel::distance_power(6, 4, 1.0).unwrap(),
            Gauge::None,
            true,
        )
            .unwrap();
        let u = (2.0f64 / 3.0).sqrt();
        let side = u.sqrt();
        let x = Configuration::from_positions(
            &[
                [0.0, 0.0],
                [side, 0.0],
                [side / 2.0, side * 3.0f64.sqrt() / 2.0],
                [0.0, 0.0],
            ],
            Gauge::None,
        );
        let (class, nulls, _) = classify(&inst, &x).unwrap();
        assert_eq!(class, Classification::Minimum);
        assert!(nulls >= 3, "translations and rotation give {} nulls", nulls);
    }

    #[test]
    fn equivariance_of_descent_paths() {
        let inst = octahedral_instance();
        let x0 = Configuration::new(
            vec![1.1, 0.9, 1.05, 0.97, 1.02, 0.95],
            inst.geometry(),
        )
        .unwrap();
        let settings = octahedral_gd_settings();
        let base = descend(&inst, x0.clone(), &settings).unwrap();
        for sigma in inst.symmetry().elements().iter().step_by(7) {
            let moved = inst.apply_symmetry(&x0, sigma).unwrap();
            let rec = descend(&inst, moved, &settings).unwrap();
            let expected = inst.apply_symmetry(&base.config, sigma).unwrap();
            for (a, b) in rec.config.values.iter().zip(&expected.values) {
                assert!((a - b).abs() < 1e-6, "equivariance violated: {a} vs {b}");
            }
        }
    }

    #[test]
    fn unbounded_descent_reports_overflow() {
        // a pure odd cubic is unbounded below along the diagonal
        let kernel = Kernel::sparse_poly(vec![crate::kernels::Monomial {
            coeff: -1.0,
            exps: [3, 0, 0, 0],
        }])
        .unwrap();
        let inst = LossInstance::graph_edge_pairs(2, &[(0, 1)], kernel).unwrap();
        let x0 = Configuration::constant(1.0, inst.geometry());
        let mut settings = OptimizerSettings::gd();
        settings.max_iters = 100_000;
        let err = descend(&inst, x0, &settings).unwrap_err();
        assert!(matches!(err, OptimizeError::NumericOverflow { .. }), "{err}");
    }

    #[test]
    fn nonconvergence_is_reported_honestly() {
        let inst = octahedral_instance();
        let x0 = Configuration::new(
            vec![0.8, -0.7, 0.6, -0.5, 0.4, -0.3],
            inst.geometry(),
        )
        .unwrap();
        let mut settings = OptimizerSettings::gd();
        settings.max_iters = 3;
        let err = descend(&inst, x0, &settings).unwrap_err();
        assert!(matches!(err, OptimizeError::NonConvergence { iterations: 3, .. }));
    }

    #[test]
    fn settings_are_validated() {
        let mut s = OptimizerSettings::gd();
        s.grad_tol = -1.0;
        assert!(matches!(
            s.validate(),
            Err(OptimizeError::InvalidSettings(_))
        ));
        let mut s = OptimizerSettings::newton();
        s.max_iters = 0;
        assert!(s.validate().is_err());
    }
}
