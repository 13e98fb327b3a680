//! Independent oracles shared by the integration tests: brute-force loss
//! evaluation straight from the sensing matrices, finite-difference stencils
//! and random instance generators.
#![allow(dead_code)]

use bm_landscape::linalg::{gaussian_matrix, seeded_rng};
use bm_landscape::operators::{isometry_operator, make_underparameterized_instance};
use bm_landscape::{make_epsilon_operator, make_gaussian_operator, make_instance, LossSpec, ProblemInstance};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    seeded_rng(seed)
}

/// `⟨A_i, XXᵀ − M*⟩` for every `i`, one sensing matrix at a time.
pub fn brute_residual(inst: &ProblemInstance, x: &DMatrix<f64>) -> Vec<f64> {
    let diff = x * x.transpose() - &inst.mstar;
    (0..inst.m()).map(|i| inst.operator.sensing_matrix(i).dot(&diff)).collect()
}

/// `½ Σ a_i² + (λ/l) Σ a_i^l`.
pub fn brute_objective(inst: &ProblemInstance, x: &DMatrix<f64>, l: u32, lambda: f64) -> f64 {
    let a = brute_residual(inst, x);
    let base: f64 = 0.5 * a.iter().map(|v| v * v).sum::<f64>();
    let pen: f64 = a.iter().map(|v| v.powi(l as i32)).sum::<f64>() / f64::from(l);
    base + lambda * pen
}

/// `(1/l) Σ ⟨A_i, M − M*⟩^l`.
pub fn brute_h(inst: &ProblemInstance, m: &DMatrix<f64>, l: u32) -> f64 {
    let diff = m - &inst.mstar;
    (0..inst.m())
        .map(|i| inst.operator.sensing_matrix(i).dot(&diff).powi(l as i32))
        .sum::<f64>()
        / f64::from(l)
}

/// Five-point central difference of `f` with respect to every entry of `x`.
pub fn fd_gradient(f: impl Fn(&DMatrix<f64>) -> f64, x: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(x.nrows(), x.ncols());
    for idx in 0..x.len() {
        let shifted = |t: f64| {
            let mut y = x.clone();
            y[idx] += t;
            f(&y)
        };
        g[idx] = (-shifted(2.0 * h) + 8.0 * shifted(h) - 8.0 * shifted(-h) + shifted(-2.0 * h)) / (12.0 * h);
    }
    g
}

/// Five-point second derivative of `t ↦ f(X + tU)` at `t = 0`.
pub fn fd_second_directional(f: impl Fn(&DMatrix<f64>) -> f64, x: &DMatrix<f64>, u: &DMatrix<f64>, h: f64) -> f64 {
    let at = |t: f64| f(&(x + u * t));
    (-at(2.0 * h) + 16.0 * at(h) - 30.0 * at(0.0) + 16.0 * at(-h) - at(-2.0 * h)) / (12.0 * h * h)
}

/// Five-point first derivative of a scalar function.
pub fn fd_scalar(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}

pub fn rel_err_mat(got: &DMatrix<f64>, want: &DMatrix<f64>) -> f64 {
    (got - want).norm() / want.norm().max(f64::MIN_POSITIVE)
}

pub fn random_symmetric<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let g = gaussian_matrix(rng, n, n);
    (&g + g.transpose()) * 0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Gaussian,
    EpsilonMask,
    Isometry,
}

/// Random instance with `n ≤ 8`, `r ≤ 3`, `r* ≤ r` and `‖X*‖_F ∈ [0.5, 2]`.
pub fn random_instance<R: Rng>(rng: &mut R, kind: OpKind) -> ProblemInstance {
    let n = rng.random_range(2..=8);
    let r = rng.random_range(1..=3usize.min(n));
    let rstar = rng.random_range(1..=r);
    let op = match kind {
        OpKind::Gaussian => {
            let m = rng.random_range(n..=2 * n * n);
            make_gaussian_operator(n, m, rng.random()).unwrap()
        }
        OpKind::EpsilonMask => make_epsilon_operator(n, rng.random_range(0.1..0.9)).unwrap(),
        OpKind::Isometry => isometry_operator(n).unwrap(),
    };
    let xstar = gaussian_matrix(rng, n, rstar);
    let xstar = &xstar * (rng.random_range(0.5..2.0) / xstar.norm());
    make_instance(op, xstar, r).unwrap()
}

pub fn random_kind<R: Rng>(rng: &mut R) -> OpKind {
    match rng.random_range(0..3) {
        0 => OpKind::Gaussian,
        1 => OpKind::EpsilonMask,
        _ => OpKind::Isometry,
    }
}

pub fn random_spec<R: Rng>(rng: &mut R) -> LossSpec {
    let l = [2, 4, 6][rng.random_range(0..3)];
    let lambda = [0.0, 0.5, 5.0][rng.random_range(0..3)];
    LossSpec::new(l, lambda).unwrap()
}

/// Random factor for `inst` with Frobenius norm in `[0.3, 1.5]`.
pub fn random_point<R: Rng>(rng: &mut R, inst: &ProblemInstance) -> DMatrix<f64> {
    let x = gaussian_matrix(rng, inst.n(), inst.r);
    &x * (rng.random_range(0.3..1.5) / x.norm())
}

/// Identity operator on `n × n` with `M* = diag(d)` and search rank `r`.
pub fn diagonal_instance(d: &[f64], r: usize) -> ProblemInstance {
    let n = d.len();
    let xstar = DMatrix::from_fn(n, n, |i, j| if i == j { d[i].max(0.0).sqrt() } else { 0.0 });
    let keep: Vec<usize> = (0..n).filter(|&i| d[i] > 0.0).collect();
    let xstar = DMatrix::from_fn(n, keep.len().max(1), |i, k| keep.get(k).map_or(0.0, |&c| xstar[(i, c)]));
    make_underparameterized_instance(isometry_operator(n).unwrap(), xstar, r).unwrap()
}
