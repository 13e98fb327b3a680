//! Critical-point classification, strict-saddle criteria and bounds, escape
//! directions, region calculators and two-dimensional curvature sweeps.
//!
//! The checkers take the RIP constant `δ` as an input; nothing here tries to
//! compute it.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{dim_err, param_err, Result};
use crate::linalg::{self, fmt_f64};
use crate::losses::{self, LossSpec, TaylorCoefficient};
use crate::operators::{ProblemInstance, RANK_TOL};

/// Criteria closer than this (relative) to their threshold count as not satisfied.
pub const BOUNDARY_MARGIN: f64 = 1e-12;
/// Slack in `λ_min ≤ bound + tol` when judging a verdict.
pub const CONSISTENCY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    NotCritical,
    StrictSaddle,
    SecondOrderPoint,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::NotCritical => "not_critical",
            Classification::StrictSaddle => "strict_saddle",
            Classification::SecondOrderPoint => "second_order_point",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalPointReport {
    pub grad_norm: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// r-th largest singular value of the factor (0 when rank deficient).
    pub sigma_r: f64,
    /// `‖XXᵀ − M*‖_F`.
    pub distance: f64,
    pub classification: Classification,
    pub grad_tol: f64,
    pub eig_tol: f64,
}

/// `1e−8 · max(1, ‖b‖)`.
pub fn default_grad_tol(inst: &ProblemInstance) -> f64 {
    1e-8 * inst.b.norm().max(1.0)
}

/// `1e−8 · max(1, λ_max)`.
pub fn default_eig_tol(lambda_max: f64) -> f64 {
    1e-8 * lambda_max.max(1.0)
}

/// Gradient norm and sorted Hessian spectrum of `f_λ^l` at `x`.
fn gradient_and_spectrum(inst: &ProblemInstance, x: &DMatrix<f64>, spec: &LossSpec) -> Result<(f64, DVector<f64>)> {
    let grad = losses::gradient(inst, x, spec)?;
    let h = losses::hessian_matrix(inst, x, spec)?;
    Ok((grad.norm(), linalg::sym_eigenvalues(&h)))
}

/// `λ_min(∇²f_λ^l(X))`.
pub fn hessian_min_eigenvalue(inst: &ProblemInstance, x: &DMatrix<f64>, spec: &LossSpec) -> Result<f64> {
    let h = losses::hessian_matrix(inst, x, spec)?;
    Ok(linalg::sym_eigenvalues(&h)[0])
}

pub fn classify_point(
    inst: &ProblemInstance,
    x: &DMatrix<f64>,
    spec: &LossSpec,
    grad_tol: f64,
    eig_tol: f64,
) -> Result<CriticalPointReport> {
    if !(grad_tol > 0.0) || !(eig_tol > 0.0) {
        return param_err(format!("tolerances must be positive, got grad_tol={grad_tol}, eig_tol={eig_tol}"));
    }
    let (grad_norm, spectrum) = gradient_and_spectrum(inst, x, spec)?;
    Ok(report_from(inst, x, grad_norm, &spectrum, grad_tol, eig_tol))
}

/// [`classify_point`] with the scale-relative default tolerances.
pub fn classify_point_default(inst: &ProblemInstance, x: &DMatrix<f64>, spec: &LossSpec) -> Result<CriticalPointReport> {
    let (grad_norm, spectrum) = gradient_and_spectrum(inst, x, spec)?;
    let eig_tol = default_eig_tol(spectrum[spectrum.len() - 1]);
    Ok(report_from(inst, x, grad_norm, &spectrum, default_grad_tol(inst), eig_tol))
}

fn report_from(
    inst: &ProblemInstance,
    x: &DMatrix<f64>,
    grad_norm: f64,
    spectrum: &DVector<f64>,
    grad_tol: f64,
    eig_tol: f64,
) -> CriticalPointReport {
    let lambda_min = spectrum[0];
    let lambda_max = spectrum[spectrum.len() - 1];
    let classification = if grad_norm > grad_tol {
        Classification::NotCritical
    } else if lambda_min < -eig_tol {
        Classification::StrictSaddle
    } else {
        Classification::SecondOrderPoint
    };
    CriticalPointReport {
        grad_norm,
        lambda_min,
        lambda_max,
        sigma_r: linalg::smallest_right_singular(x).0,
        distance: distance_unchecked(x, &inst.mstar),
        classification,
        grad_tol,
        eig_tol,
    }
}

fn distance_unchecked(x: &DMatrix<f64>, mstar: &DMatrix<f64>) -> f64 {
    (x * x.transpose() - mstar).norm()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremVerdict {
    pub criterion_satisfied: bool,
    /// Upper bound on `λ_min` implied by the criterion (`+∞` when `tr(M*) = 0`).
    pub predicted_bound: f64,
    pub observed_lambda_min: f64,
    /// `criterion ⟹ observed ≤ bound + tol`.
    pub consistent: bool,
    pub grad_norm: f64,
    pub distance: f64,
    pub sigma_r: f64,
    pub delta: f64,
}

fn check_delta(delta: f64) -> Result<()> {
    if !(0.0..1.0).contains(&delta) {
        return param_err(format!("RIP constant must lie in [0, 1), got {delta}"));
    }
    Ok(())
}

/// `lhs > rhs` with a relative dead zone: near-ties are reported as false.
fn exceeds(lhs: f64, rhs: f64) -> bool {
    lhs - rhs > BOUNDARY_MARGIN * lhs.abs().max(rhs.abs()).max(1.0)
}

fn verdict(criterion: bool, bound: f64, observed: f64, grad_norm: f64, d: f64, sigma: f64, delta: f64) -> TheoremVerdict {
    TheoremVerdict {
        criterion_satisfied: criterion,
        predicted_bound: bound,
        observed_lambda_min: observed,
        consistent: !criterion || observed <= bound + CONSISTENCY_TOL,
        grad_norm,
        distance: d,
        sigma_r: sigma,
        delta,
    }
}

/// Least-squares far-region criterion `D² > 2(1+δ)/(1−δ) tr(M*) σ_r²` and
/// curvature bound `2(1+δ)σ_r² − D²(1−δ)/tr(M*)`.
pub fn thm1_check(inst: &ProblemInstance, x: &DMatrix<f64>, delta: f64) -> Result<TheoremVerdict> {
    check_delta(delta)?;
    let spec = LossSpec::least_squares();
    let (grad_norm, spectrum) = gradient_and_spectrum(inst, x, &spec)?;
    let (sigma, _) = linalg::smallest_right_singular(x);
    let d = distance_unchecked(x, &inst.mstar);
    let tr = inst.mstar.trace();
    if tr <= 0.0 {
        return Ok(verdict(false, f64::INFINITY, spectrum[0], grad_norm, d, sigma, delta));
    }
    let s2 = sigma * sigma;
    let criterion = exceeds(d * d, far_region_threshold(tr, sigma, delta));
    let bound = 2.0 * (1.0 + delta) * s2 - d * d * (1.0 - delta) / tr;
    Ok(verdict(criterion, bound, spectrum[0], grad_norm, d, sigma, delta))
}

/// Penalized criterion and bound with the default constant `C(l)`.
pub fn thm4_check(inst: &ProblemInstance, x: &DMatrix<f64>, delta: f64, spec: &LossSpec) -> Result<TheoremVerdict> {
    thm4_check_with(inst, x, delta, spec, TaylorCoefficient::AsPrinted)
}

/// Penalized criterion
/// `D² [(1−δ)/2 + λC(1−δ)^{l/2}D^{l−2}] ≥ tr(M*) σ_r² [(1+δ) + λ(l−1)(1+δ)^{l/2}D^{l−2}]`
/// and bound
/// `[2(1+δ)σ_r² − D²(1−δ)/tr] + λD^{l−2}[2(1+δ)^{l/2}(l−1)σ_r² − 2(1−δ)^{l/2}C D²/tr]`,
/// with `C = m^{(2−l)/2} κ_l` for the chosen Taylor coefficient `κ_l`.
pub fn thm4_check_with(
    inst: &ProblemInstance,
    x: &DMatrix<f64>,
    delta: f64,
    spec: &LossSpec,
    coefficient: TaylorCoefficient,
) -> Result<TheoremVerdict> {
    check_delta(delta)?;
    let (grad_norm, spectrum) = gradient_and_spectrum(inst, x, spec)?;
    let (sigma, _) = linalg::smallest_right_singular(x);
    let d = distance_unchecked(x, &inst.mstar);
    let tr = inst.mstar.trace();
    if tr <= 0.0 {
        return Ok(verdict(false, f64::INFINITY, spectrum[0], grad_norm, d, sigma, delta));
    }
    let l = spec.order();
    let lam = spec.lambda();
    let lf = f64::from(l);
    let c = losses::c_of_l_with(l, inst.m(), coefficient);
    let s2 = sigma * sigma;
    let dl2 = d.powi(l as i32 - 2);
    let up = (1.0 + delta).powf(lf / 2.0);
    let down = (1.0 - delta).powf(lf / 2.0);

    // Cross-multiplied so the denominator never divides; it is positive.
    let lhs = d * d * ((1.0 - delta) / 2.0 + lam * c * down * dl2);
    let rhs = tr * s2 * ((1.0 + delta) + lam * (lf - 1.0) * up * dl2);
    // `≥` as stated; ties inside the boundary margin still count as false.
    let criterion = exceeds(lhs, rhs);

    let base = 2.0 * (1.0 + delta) * s2 - d * d * (1.0 - delta) / tr;
    let extra = lam * dl2 * (2.0 * up * (lf - 1.0) * s2 - 2.0 * down * c * d * d / tr);
    Ok(verdict(criterion, base + extra, spectrum[0], grad_norm, d, sigma, delta))
}

/// `Δ = u qᵀ` with `u` the bottom eigenvector of `∇h_λ^l(XXᵀ)` and `q` the
/// right-singular vector of `X` for `σ_r` (lowest zero column on ties at 0).
pub fn escape_direction(inst: &ProblemInstance, x: &DMatrix<f64>, spec: &LossSpec) -> Result<DMatrix<f64>> {
    let g = losses::lifted_gradient_at_factor(inst, x, spec)?;
    let u = linalg::sym_eigen(&g).min_vector();
    let (_, q) = linalg::smallest_right_singular(x);
    Ok(u * q.transpose())
}

/// `2(1+δ)/(1−δ) · tr(M*) · σ_r²`: the squared distance beyond which a
/// critical point of the least-squares loss must be a strict saddle.
pub fn far_region_threshold(trace: f64, sigma_r: f64, delta: f64) -> f64 {
    2.0 * (1.0 + delta) / (1.0 - delta) * trace * sigma_r * sigma_r
}

/// `(1+δ)/(1−δ) · tr(M*) · σ_r²(X)`, the threshold of the lifted analysis
/// (exactly half of [`far_region_threshold`]).
pub fn lifted_region_threshold(mstar: &DMatrix<f64>, x: &DMatrix<f64>, delta: f64) -> f64 {
    let (sigma, _) = linalg::smallest_right_singular(x);
    (1.0 + delta) / (1.0 - delta) * mstar.trace() * sigma * sigma
}

/// Eigenvalues of `M*` in descending order and its numerical rank.
fn psd_spectrum(mstar: &DMatrix<f64>) -> (Vec<f64>, usize) {
    let mut vals: Vec<f64> = linalg::sym_eigenvalues(mstar).iter().copied().collect();
    vals.reverse();
    let top = vals.first().copied().unwrap_or(0.0);
    let rank = if top <= 0.0 { 0 } else { vals.iter().filter(|&&v| v > RANK_TOL * top).count() };
    (vals, rank)
}

/// Smallest nonzero eigenvalue `λ_{r*}(M*)` (0 for `M* = 0`).
pub fn smallest_nonzero_eigenvalue(mstar: &DMatrix<f64>) -> f64 {
    let (vals, rank) = psd_spectrum(mstar);
    if rank == 0 {
        0.0
    } else {
        vals[rank - 1]
    }
}

/// `τ λ_{r*}(M*)` for `τ ∈ (0, 1 − δ²)`.
pub fn near_region_radius(mstar: &DMatrix<f64>, delta: f64, tau: f64) -> Result<f64> {
    check_delta(delta)?;
    if !(tau > 0.0 && tau < 1.0 - delta * delta) {
        return param_err(format!("τ must lie in (0, {}), got {tau}", 1.0 - delta * delta));
    }
    Ok(tau * smallest_nonzero_eigenvalue(mstar))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenignCondition {
    pub holds: bool,
    /// `‖M*‖_F tr(M*) / λ_{r*}(M*)`.
    pub lhs: f64,
    /// `(√r / 2√2) √((1−δ)⁵/(1+δ))`.
    pub rhs: f64,
    /// Bound `√(2(1+δ)/(r(1−δ))) ‖M*‖_F` on `σ_r²` of any second-order point.
    pub sigma_sq_bound: f64,
    /// `(1 − δ²) λ_{r*}(M*)`.
    pub near_threshold: f64,
    /// [`far_region_threshold`] evaluated at `σ_r² = sigma_sq_bound`.
    pub far_threshold: f64,
}

pub fn global_benign_condition(mstar: &DMatrix<f64>, delta: f64, r: usize) -> Result<BenignCondition> {
    check_delta(delta)?;
    if r == 0 {
        return param_err("search rank must be ≥ 1");
    }
    let rf = r as f64;
    let rhs = rf.sqrt() / (2.0 * 2f64.sqrt()) * ((1.0 - delta).powi(5) / (1.0 + delta)).sqrt();
    let fro = mstar.norm();
    let sigma_sq_bound = (2.0 * (1.0 + delta) / (rf * (1.0 - delta))).sqrt() * fro;
    let lam = smallest_nonzero_eigenvalue(mstar);
    let tr = mstar.trace();
    let lhs = if lam > 0.0 { fro * tr / lam } else { 0.0 };
    Ok(BenignCondition {
        holds: lhs <= rhs,
        lhs,
        rhs,
        sigma_sq_bound,
        near_threshold: (1.0 - delta * delta) * lam,
        far_threshold: 2.0 * (1.0 + delta) / (1.0 - delta) * tr * sigma_sq_bound,
    })
}

/// `λ_min(∇²f_λ^l)` on the lattice `X̂ + s d₁ + t d₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub coords: Vec<f64>,
    /// Row-major in `(s, t)`: entry `i * len + j` is at `(coords[i], coords[j])`.
    pub lambda_min: Vec<f64>,
    pub d1: DMatrix<f64>,
    pub d2: DMatrix<f64>,
}

impl SweepGrid {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.lambda_min[i * self.len() + j]
    }

    pub fn center(&self) -> f64 {
        let c = self.len() / 2;
        self.at(c, c)
    }

    pub fn min(&self) -> f64 {
        self.lambda_min.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// CSV with header `s,t,lambda_min`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "s,t,lambda_min")?;
        for (i, s) in self.coords.iter().enumerate() {
            for (j, t) in self.coords.iter().enumerate() {
                writeln!(w, "{},{},{}", fmt_f64(*s), fmt_f64(*t), fmt_f64(self.at(i, j)))?;
            }
        }
        Ok(())
    }
}

/// Sweeps the plane through `xhat` spanned by the unit direction toward
/// `xstar` and a seeded orthogonal direction. `xstar` may have fewer columns
/// than `xhat`; it is zero-padded.
#[allow(clippy::too_many_arguments)]
pub fn landscape_sweep(
    inst: &ProblemInstance,
    xhat: &DMatrix<f64>,
    xstar: &DMatrix<f64>,
    half_width: f64,
    grid_points: usize,
    spec: &LossSpec,
    seed: u64,
) -> Result<SweepGrid> {
    inst.check_factor(xhat)?;
    if grid_points == 0 || grid_points % 2 == 0 {
        return param_err(format!("grid_points must be odd, got {grid_points}"));
    }
    if !(half_width >= 0.0) || !half_width.is_finite() {
        return param_err(format!("half_width must be finite and ≥ 0, got {half_width}"));
    }
    if xstar.nrows() != xhat.nrows() || xstar.ncols() > xhat.ncols() {
        return dim_err(format!("ground-truth factor is {:?}, sweep point is {:?}", xstar.shape(), xhat.shape()));
    }
    let target = crate::operators::pad_factor(xstar, xhat.ncols());
    let diff = &target - xhat;
    let dn = diff.norm();
    if dn == 0.0 {
        return param_err("sweep point coincides with the ground truth; direction d₁ is undefined");
    }
    let d1 = diff / dn;
    let d2 = orthogonal_direction(&d1, seed);

    let c = (grid_points - 1) / 2;
    let coords: Vec<f64> = (0..grid_points)
        .map(|i| if c == 0 { 0.0 } else { half_width * (i as f64 - c as f64) / c as f64 })
        .collect();
    let cells: Vec<(usize, usize)> = (0..grid_points).flat_map(|i| (0..grid_points).map(move |j| (i, j))).collect();
    let lambda_min = cells
        .par_iter()
        .map(|&(i, j)| {
            let x = xhat + &d1 * coords[i] + &d2 * coords[j];
            hessian_min_eigenvalue(inst, &x, spec)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(SweepGrid { coords, lambda_min, d1, d2 })
}

/// Unit matrix orthogonal to `d1` in the trace inner product: Gram–Schmidt on
/// a seeded Gaussian draw (redrawn in the unlikely event it is parallel).
fn orthogonal_direction(d1: &DMatrix<f64>, seed: u64) -> DMatrix<f64> {
    let mut rng = linalg::seeded_rng(seed);
    loop {
        let g = linalg::gaussian_matrix(&mut rng, d1.nrows(), d1.ncols());
        let v = &g - d1 * d1.dot(&g);
        let norm = v.norm();
        if norm > 1e-8 * g.norm() {
            return v / norm;
        }
        if d1.len() == 1 {
            // a 1×1 factor has no orthogonal complement
            return DMatrix::zeros(1, 1);
        }
    }
}
