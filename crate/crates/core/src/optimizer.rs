//! Gradient descent and perturbed gradient descent on `f_λ^l`, plus a
//! multi-start search for spurious second-order points.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{dim_err, param_err, Result};
use crate::landscape::{self, CriticalPointReport};
use crate::linalg::{self, fmt_f64};
use crate::losses::{self, LossSpec};
use crate::operators::ProblemInstance;

/// Step, stopping and perturbation settings.
///
/// With `step = None` the step is `step_factor / ρ(∇²f(X₀))`, `ρ` the spectral
/// radius of the least-squares Hessian at the starting point.
#[derive(Debug, Clone, PartialEq)]
pub struct PgdConfig {
    pub step: Option<f64>,
    pub step_factor: f64,
    pub max_iters: usize,
    /// Perturb when the gradient norm drops below this (0 disables).
    pub grad_trigger: f64,
    pub perturb_radius: f64,
    pub init_scale: f64,
    pub seed: u64,
    /// Stop once `‖XXᵀ − M*‖_F ≤ converge_tol`.
    pub converge_tol: f64,
    /// Stop once the gradient norm is at most this (unset: never).
    pub stationary_tol: Option<f64>,
    /// Keep every k-th iterate in the trajectory (the last one is always kept).
    pub record_every: usize,
}

impl Default for PgdConfig {
    fn default() -> Self {
        Self {
            step: None,
            step_factor: 0.05,
            max_iters: 100_000,
            grad_trigger: 1e-6,
            perturb_radius: 1e-4,
            init_scale: 1e-3,
            seed: 0,
            converge_tol: 1e-6,
            stationary_tol: None,
            record_every: 1,
        }
    }
}

impl PgdConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                param_err(format!("{name} must be positive and finite, got {v}"))
            }
        };
        if let Some(step) = self.step {
            positive("step", step)?;
        }
        positive("step_factor", self.step_factor)?;
        positive("init_scale", self.init_scale)?;
        positive("converge_tol", self.converge_tol)?;
        if !(self.grad_trigger >= 0.0) || !(self.perturb_radius >= 0.0) {
            return param_err("grad_trigger and perturb_radius must be ≥ 0");
        }
        if let Some(t) = self.stationary_tol {
            positive("stationary_tol", t)?;
        }
        if self.max_iters == 0 || self.record_every == 0 {
            return param_err("max_iters and record_every must be ≥ 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIters,
    Diverged,
    /// Gradient norm fell to `stationary_tol` away from the ground truth.
    Stationary,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIters => "max_iters",
            Termination::Diverged => "diverged",
            Termination::Stationary => "stationary",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    pub f: f64,
    pub dist: f64,
    pub grad_norm: f64,
    /// Noise was added before this iteration's step.
    pub perturbed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<IterRecord>,
    pub final_x: DMatrix<f64>,
    pub termination: Termination,
    /// Index of the last iterate (the number of steps taken).
    pub iterations: usize,
    pub perturbations: usize,
    pub step: f64,
}

impl Trajectory {
    /// First recorded iteration with `dist < tol`.
    pub fn iters_to_distance(&self, tol: f64) -> Option<usize> {
        self.records.iter().find(|r| r.dist < tol).map(|r| r.iter)
    }

    pub fn final_record(&self) -> &IterRecord {
        self.records.last().expect("trajectory always holds its last iterate")
    }

    /// CSV with header `iter,f,dist,grad_norm,perturbed`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iter,f,dist,grad_norm,perturbed")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.iter,
                fmt_f64(r.f),
                fmt_f64(r.dist),
                fmt_f64(r.grad_norm),
                u8::from(r.perturbed)
            )?;
        }
        Ok(())
    }
}

/// `‖XXᵀ − M*‖_F`.
pub fn distance_to_truth(x: &DMatrix<f64>, mstar: &DMatrix<f64>) -> Result<f64> {
    if mstar.nrows() != mstar.ncols() || mstar.nrows() != x.nrows() {
        return dim_err(format!("factor is {:?}, ground truth is {:?}", x.shape(), mstar.shape()));
    }
    Ok((x * x.transpose() - mstar).norm())
}

/// `init_scale · G` with `G` standard Gaussian `n × r`, drawn from `seed`.
pub fn small_init(inst: &ProblemInstance, config: &PgdConfig) -> DMatrix<f64> {
    let mut rng = linalg::seeded_rng(config.seed);
    linalg::gaussian_matrix(&mut rng, inst.n(), inst.r) * config.init_scale
}

fn resolve_step(inst: &ProblemInstance, x0: &DMatrix<f64>, config: &PgdConfig) -> Result<f64> {
    if let Some(step) = config.step {
        return Ok(step);
    }
    // Sized on the plain least-squares Hessian so that runs differing only in
    // λ share the same step from the same start.
    let h = losses::hessian_matrix(inst, x0, &LossSpec::least_squares())?;
    let eig = linalg::sym_eigenvalues(&h);
    let radius = eig[0].abs().max(eig[eig.len() - 1].abs());
    Ok(if radius > 0.0 { config.step_factor / radius } else { config.step_factor })
}

pub fn gradient_descent(inst: &ProblemInstance, spec: &LossSpec, config: &PgdConfig) -> Result<Trajectory> {
    config.validate()?;
    run(inst, spec, config, small_init(inst, config), false)
}

pub fn gradient_descent_from(
    inst: &ProblemInstance,
    spec: &LossSpec,
    config: &PgdConfig,
    x0: DMatrix<f64>,
) -> Result<Trajectory> {
    config.validate()?;
    inst.check_factor(&x0)?;
    run(inst, spec, config, x0, false)
}

/// Gradient descent that adds `perturb_radius · N(0, I)` to the factor before
/// any step taken with gradient norm below `grad_trigger` away from the
/// ground truth. Noise comes from a separate stream of `seed`.
pub fn perturbed_gd(inst: &ProblemInstance, spec: &LossSpec, config: &PgdConfig) -> Result<Trajectory> {
    config.validate()?;
    run(inst, spec, config, small_init(inst, config), true)
}

pub fn perturbed_gd_from(
    inst: &ProblemInstance,
    spec: &LossSpec,
    config: &PgdConfig,
    x0: DMatrix<f64>,
) -> Result<Trajectory> {
    config.validate()?;
    inst.check_factor(&x0)?;
    run(inst, spec, config, x0, true)
}

const DIVERGENCE_FACTOR: f64 = 1e6;

fn run(inst: &ProblemInstance, spec: &LossSpec, config: &PgdConfig, x0: DMatrix<f64>, perturb: bool) -> Result<Trajectory> {
    let step = resolve_step(inst, &x0, config)?;
    let mut noise = linalg::seeded_rng_stream(config.seed, 1);
    let mut x = x0;
    let mut records = Vec::new();
    let mut perturbations = 0;
    let mut f0 = None;

    let mut k = 0;
    let termination = loop {
        let (f, mut grad) = losses::value_and_gradient(inst, &x, spec);
        let dist = (&x * x.transpose() - &inst.mstar).norm();
        let grad_norm = grad.norm();
        let f_init = *f0.get_or_insert(f);
        let mut rec = IterRecord { iter: k, f, dist, grad_norm, perturbed: false };

        let stop = if dist <= config.converge_tol {
            Some(Termination::Converged)
        } else if !f.is_finite() || !dist.is_finite() || f > DIVERGENCE_FACTOR * f_init.max(f64::MIN_POSITIVE) {
            Some(Termination::Diverged)
        } else if config.stationary_tol.is_some_and(|t| grad_norm <= t) {
            Some(Termination::Stationary)
        } else if k == config.max_iters {
            Some(Termination::MaxIters)
        } else {
            None
        };
        if let Some(t) = stop {
            records.push(rec);
            break t;
        }

        if perturb && grad_norm < config.grad_trigger {
            x += linalg::gaussian_matrix(&mut noise, x.nrows(), x.ncols()) * config.perturb_radius;
            grad = losses::gradient(inst, &x, spec)?;
            rec.perturbed = true;
            perturbations += 1;
        }
        if k % config.record_every == 0 {
            records.push(rec);
        }
        x -= grad * step;
        k += 1;
    };

    Ok(Trajectory { records, final_x: x, termination, iterations: k, perturbations, step })
}

/// A retained spurious second-order point.
#[derive(Debug, Clone, PartialEq)]
pub struct SpuriousPoint {
    pub x: DMatrix<f64>,
    pub report: CriticalPointReport,
    /// Seed (or start index) of the run that produced it.
    pub origin: u64,
}

/// Runs gradient descent from `n_starts` small initializations with seeds
/// `config.seed, config.seed + 1, …` and keeps the numerically second-order
/// points that are not the ground truth, one per `(D, λ_min, λ_max)` class.
pub fn find_spurious_minima(
    inst: &ProblemInstance,
    spec: &LossSpec,
    n_starts: usize,
    config: &PgdConfig,
    grad_tol: f64,
    eig_tol: f64,
) -> Result<Vec<SpuriousPoint>> {
    if n_starts == 0 {
        return param_err("n_starts must be ≥ 1");
    }
    let starts: Vec<(u64, DMatrix<f64>)> = (0..n_starts as u64)
        .map(|k| {
            let seed = config.seed.wrapping_add(k);
            let cfg = PgdConfig { seed, ..config.clone() };
            (seed, small_init(inst, &cfg))
        })
        .collect();
    search(inst, spec, &starts, config, grad_tol, eig_tol)
}

/// As [`find_spurious_minima`] from caller-supplied starting factors; `origin`
/// is the index into `inits`.
pub fn find_spurious_minima_from(
    inst: &ProblemInstance,
    spec: &LossSpec,
    inits: &[DMatrix<f64>],
    config: &PgdConfig,
    grad_tol: f64,
    eig_tol: f64,
) -> Result<Vec<SpuriousPoint>> {
    for x in inits {
        inst.check_factor(x)?;
    }
    let starts: Vec<(u64, DMatrix<f64>)> = inits.iter().cloned().enumerate().map(|(i, x)| (i as u64, x)).collect();
    search(inst, spec, &starts, config, grad_tol, eig_tol)
}

/// Points within this of each other in `(D, λ_min, λ_max)` are one class.
pub const DEDUP_TOL: f64 = 1e-4;

fn search(
    inst: &ProblemInstance,
    spec: &LossSpec,
    starts: &[(u64, DMatrix<f64>)],
    config: &PgdConfig,
    grad_tol: f64,
    eig_tol: f64,
) -> Result<Vec<SpuriousPoint>> {
    config.validate()?;
    if !(grad_tol > 0.0) || !(eig_tol > 0.0) {
        return param_err("tolerances must be positive");
    }
    let cfg = PgdConfig { stationary_tol: Some(config.stationary_tol.unwrap_or(grad_tol).min(grad_tol)), ..config.clone() };
    // parallel over starts, merged in start order
    let candidates = starts
        .par_iter()
        .map(|(origin, x0)| {
            let traj = run(inst, spec, &PgdConfig { seed: *origin, ..cfg.clone() }, x0.clone(), false)?;
            let report = landscape::classify_point(inst, &traj.final_x, spec, grad_tol, eig_tol)?;
            Ok((*origin, traj.final_x, report))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut kept: Vec<SpuriousPoint> = Vec::new();
    for (origin, x, report) in candidates {
        let spurious = report.grad_norm <= grad_tol
            && report.lambda_min >= -eig_tol
            && report.distance > 10.0 * config.converge_tol;
        if !spurious {
            continue;
        }
        let duplicate = kept.iter().any(|p| {
            (p.report.distance - report.distance).abs() <= DEDUP_TOL
                && (p.report.lambda_min - report.lambda_min).abs() <= DEDUP_TOL
                && (p.report.lambda_max - report.lambda_max).abs() <= DEDUP_TOL
        });
        if !duplicate {
            kept.push(SpuriousPoint { x, report, origin });
        }
    }
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{isometry_operator, make_instance};

    fn scalar() -> ProblemInstance {
        make_instance(isometry_operator(1).unwrap(), DMatrix::from_element(1, 1, 1.0), 1).unwrap()
    }

    #[test]
    fn scalar_recursion_oracle() {
        let inst = scalar();
        let cfg = PgdConfig { step: Some(0.1), max_iters: 10_000, ..PgdConfig::default() };
        let traj = gradient_descent_from(&inst, &LossSpec::least_squares(), &cfg, DMatrix::from_element(1, 1, 0.1)).unwrap();
        assert_eq!(traj.termination, Termination::Converged);
        // x ← x − 0.1 · 2x(x² − 1)
        let mut x = 0.1f64;
        for _ in 0..traj.iterations {
            x -= 0.1 * 2.0 * x * (x * x - 1.0);
        }
        assert_eq!(traj.final_x[0], x);
        assert!((x * x - 1.0).abs() < 1e-6);
    }

    #[test]
    fn exact_start_converges_immediately() {
        let inst = scalar();
        let traj = gradient_descent_from(&inst, &LossSpec::least_squares(), &PgdConfig::default(), DMatrix::from_element(1, 1, -1.0)).unwrap();
        assert_eq!((traj.iterations, traj.termination), (0, Termination::Converged));
        assert_eq!(traj.records.len(), 1);
    }

    #[test]
    fn config_validation() {
        let bad = PgdConfig { step: Some(-1.0), ..PgdConfig::default() };
        assert!(gradient_descent(&scalar(), &LossSpec::least_squares(), &bad).is_err());
        let bad = PgdConfig { max_iters: 0, ..PgdConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let inst = scalar();
        let cfg = PgdConfig { step: Some(10.0), ..PgdConfig::default() };
        let traj = gradient_descent_from(&inst, &LossSpec::least_squares(), &cfg, DMatrix::from_element(1, 1, 3.0)).unwrap();
        assert_eq!(traj.termination, Termination::Diverged);
    }

    #[test]
    fn distance_examples() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 1.0]));
        assert!((distance_to_truth(&DMatrix::zeros(2, 1), &m).unwrap() - 5f64.sqrt()).abs() < 1e-15);
        assert!(distance_to_truth(&DMatrix::zeros(3, 1), &m).is_err());
    }

    #[test]
    fn record_every_keeps_last() {
        let inst = scalar();
        let cfg = PgdConfig { step: Some(0.1), record_every: 7, ..PgdConfig::default() };
        let traj = gradient_descent_from(&inst, &LossSpec::least_squares(), &cfg, DMatrix::from_element(1, 1, 0.1)).unwrap();
        assert_eq!(traj.final_record().iter, traj.iterations);
        assert!(traj.records.windows(2).all(|w| w[0].iter < w[1].iter));
    }
}
