//! Objectives, derivatives and the exact identities behind the curvature bounds.
//!
//! With residual `a = A(XXᵀ) − b`:
//!
//! * `f(X)     = ½ Σ a_i²`
//! * `f^l(X)   = (1/l) Σ a_i^l`, `l` even
//! * `f_λ^l(X) = f(X) + λ f^l(X)`
//!
//! and on the lifted variable `M`, `h^l(M) = (1/l) Σ (A(M) − b)_i^l`.
//!
//! Gradients are true derivatives of these functions, so
//! `∇f(X) = 2 (Σ_i a_i A_i) X`. The textbook first-order condition
//! `(Σ_i a_i A_i) X = 0` differs only by that positive factor.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, param_err, Error, Result};
use crate::linalg;
use crate::operators::ProblemInstance;

/// Penalty order `l` (even, ≥ 2) and coefficient `λ ≥ 0` of `f_λ^l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    order: u32,
    lambda: f64,
}

impl LossSpec {
    pub fn new(order: u32, lambda: f64) -> Result<Self> {
        check_order(order)?;
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return param_err(format!("penalty coefficient must be finite and ≥ 0, got {lambda}"));
        }
        Ok(Self { order, lambda })
    }

    /// Plain least squares, `f_λ^l ≡ f`.
    pub fn least_squares() -> Self {
        Self { order: 2, lambda: 0.0 }
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn with_lambda(self, lambda: f64) -> Result<Self> {
        Self::new(self.order, lambda)
    }

    /// `c_i = a_i + λ a_i^{l−1}`: the weights of `∇h_λ^l = Σ c_i A_i`.
    fn gradient_weight(&self, a: f64) -> f64 {
        a + self.lambda * a.powi(self.order as i32 - 1)
    }

    /// `ω_i = 1 + λ (l−1) a_i^{l−2}`: the weights on `⟨A_i, UXᵀ + XUᵀ⟩²`.
    fn curvature_weight(&self, a: f64) -> f64 {
        1.0 + self.lambda * f64::from(self.order - 1) * a.powi(self.order as i32 - 2)
    }
}

pub(crate) fn check_order(l: u32) -> Result<()> {
    if l < 2 || l % 2 != 0 {
        return param_err(format!("loss order l must be even and ≥ 2, got {l}"));
    }
    Ok(())
}

/// `A(XXᵀ) − b`.
pub fn residual(inst: &ProblemInstance, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    inst.check_factor(x)?;
    Ok(residual_unchecked(inst, x))
}

fn residual_unchecked(inst: &ProblemInstance, x: &DMatrix<f64>) -> DVector<f64> {
    inst.operator.apply_unchecked(&(x * x.transpose())) - &inst.b
}

fn lifted_residual(inst: &ProblemInstance, m: &DMatrix<f64>) -> Result<DVector<f64>> {
    inst.check_square(m)?;
    Ok(inst.operator.apply_unchecked(m) - &inst.b)
}

fn power_sum(a: &DVector<f64>, l: u32) -> f64 {
    a.iter().map(|v| v.powi(l as i32)).sum()
}

pub fn f_value(inst: &ProblemInstance, x: &DMatrix<f64>) -> Result<f64> {
    Ok(0.5 * residual(inst, x)?.norm_squared())
}

pub fn fl_value(inst: &ProblemInstance, x: &DMatrix<f64>, l: u32) -> Result<f64> {
    check_order(l)?;
    Ok(power_sum(&residual(inst, x)?, l) / f64::from(l))
}

pub fn f_lambda_value(inst: &ProblemInstance, x: &DMatrix<f64>, spec: &LossSpec) -> Result<f64> {
    let a = residual(inst, x)?;
    Ok(objective_from_residual(&a, spec))
}

pub(crate) fn objective_from_residual(a: &DVector<f64>, spec: &LossSpec) -> f64 {
    let base = 0.5 * a.norm_squared();
    if spec.lambda == 0.0 {
        base
    } else {
        base + spec.lambda * power_sum(a, spec.order) / f64::from(spec.order)
    }
}

/// `∇h_λ^l(M) = Σ_i (a_i + λ a_i^{l−1}) A_i` evaluated from a residual vector.
fn lifted_gradient_from_residual(inst: &ProblemInstance, a: &DVector<f64>, spec: &LossSpec) -> DMatrix<f64> {
    let c = a.map(|v| spec.gradient_weight(v));
    inst.operator.adjoint_unchecked(&c)
}

/// `∇h_λ^l` at `M = XXᵀ`, the symmetric matrix whose spectrum drives the
/// strict-saddle bounds.
pub fn lifted_gradient_at_factor(inst: &ProblemInstance, x: &DMatrix<f64>, spec: &LossSpec) -> Result<DMatrix<f64>> {
    let a = residual(inst, x)?;
    Ok(lifted_gradient_from_residual(inst, &a, spec))
}

/// `∇f_λ^l(X) = 2 ∇h_λ^l(XXᵀ) X`.
pub fn gradient(inst: &ProblemInstance, x: &DMatrix<f64>, spec: &LossSpec) -> Result<DMatrix<f64>> {
    let a = residual(inst, x)?;
    Ok(gradient_from_residual(inst, x, &a, spec))
}

pub(crate) fn gradient_from_residual(
    inst: &ProblemInstance,
    x: &DMatrix<f64>,
    a: &DVector<f64>,
    spec: &LossSpec,
) -> DMatrix<f64> {
    lifted_gradient_from_residual(inst, a, spec) * x * 2.0
}

/// Objective value and gradient from one residual evaluation.
pub(crate) fn value_and_gradient(inst: &ProblemInstance, x: &DMatrix<f64>, spec: &LossSpec) -> (f64, DMatrix<f64>) {
    let a = residual_unchecked(inst, x);
    (objective_from_residual(&a, spec), gradient_from_residual(inst, x, &a, spec))
}

fn check_direction(x: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<()> {
    if u.shape() != x.shape() {
        return dim_err(format!("direction is {:?}, factor is {:?}", u.shape(), x.shape()));
    }
    Ok(())
}

/// `∇²f_λ^l(X)[U, V]`:
/// `Σ_i ω_i ⟨A_i, UXᵀ+XUᵀ⟩⟨A_i, VXᵀ+XVᵀ⟩ + 2 ⟨∇h_λ^l(XXᵀ), sym(UVᵀ)⟩`.
pub fn hessian_bilinear(
    inst: &ProblemInstance,
    x: &DMatrix<f64>,
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    spec: &LossSpec,
) -> Result<f64> {
    let a = residual(inst, x)?;
    check_direction(x, u)?;
    check_direction(x, v)?;
    let op = &inst.operator;
    let gu = op.apply_unchecked(&(u * x.transpose() + x * u.transpose()));
    let gv = op.apply_unchecked(&(v * x.transpose() + x * v.transpose()));
    let first: f64 = (0..a.len()).map(|i| spec.curvature_weight(a[i]) * gu[i] * gv[i]).sum();
    let g = lifted_gradient_from_residual(inst, &a, spec);
    let uvt = u * v.transpose();
    Ok(first + g.dot(&linalg::symmetrize(&uvt)) * 2.0)
}

pub fn hessian_quadratic_form(
    inst: &ProblemInstance,
    x: &DMatrix<f64>,
    u: &DMatrix<f64>,
    spec: &LossSpec,
) -> Result<f64> {
    let a = residual(inst, x)?;
    check_direction(x, u)?;
    let gu = inst.operator.apply_unchecked(&(u * x.transpose() + x * u.transpose()));
    let first: f64 = (0..a.len()).map(|i| spec.curvature_weight(a[i]) * gu[i] * gu[i]).sum();
    let g = lifted_gradient_from_residual(inst, &a, spec);
    Ok(first + 2.0 * g.dot(&(u * u.transpose())))
}

/// The two parts of the least-squares Hessian form,
/// `T₁ = ‖A(UXᵀ + XUᵀ)‖²` and `T₂ = 2⟨∇h(XXᵀ), UUᵀ⟩`.
pub fn hessian_terms(inst: &ProblemInstance, x: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<(f64, f64)> {
    let a = residual(inst, x)?;
    check_direction(x, u)?;
    let t1 = inst.operator.apply_unchecked(&(u * x.transpose() + x * u.transpose())).norm_squared();
    let t2 = 2.0 * inst.operator.adjoint_unchecked(&a).dot(&(u * u.transpose()));
    Ok((t1, t2))
}

/// Largest `nr` for which the dense Hessian is assembled.
pub const HESSIAN_SIZE_LIMIT: usize = 2000;

/// Dense `nr × nr` Hessian in the `vec(U)` (column-major) basis.
///
/// Entry `(α, β)` is the bilinear form on the basis directions `E_α, E_β`, i.e.
/// the polarization `¼(Q(E_α+E_β) − Q(E_α−E_β))` of the quadratic form,
/// assembled as `Jᵀ diag(ω) J + 2 (I_r ⊗ ∇h_λ^l)` with `J_{iα} = ⟨A_i, E_αXᵀ + XE_αᵀ⟩`.
pub fn hessian_matrix(inst: &ProblemInstance, x: &DMatrix<f64>, spec: &LossSpec) -> Result<DMatrix<f64>> {
    let a = residual(inst, x)?;
    let (n, r) = x.shape();
    let size = n * r;
    if size > HESSIAN_SIZE_LIMIT {
        return Err(Error::HessianTooLarge { size, limit: HESSIAN_SIZE_LIMIT });
    }
    Ok(hessian_from_residual(inst, x, &a, spec))
}

pub(crate) fn hessian_from_residual(
    inst: &ProblemInstance,
    x: &DMatrix<f64>,
    a: &DVector<f64>,
    spec: &LossSpec,
) -> DMatrix<f64> {
    let (n, r) = x.shape();
    let m = a.len();
    let mut jac = DMatrix::zeros(m, n * r);
    let mut dir = DMatrix::zeros(n, n);
    for k in 0..r {
        let xk = x.column(k);
        for p in 0..n {
            // E_α Xᵀ + X E_αᵀ = e_p x_kᵀ + x_k e_pᵀ
            dir.fill(0.0);
            for j in 0..n {
                dir[(p, j)] += xk[j];
                dir[(j, p)] += xk[j];
            }
            jac.set_column(k * n + p, &inst.operator.apply_unchecked(&dir));
        }
    }
    let mut weighted = jac.clone();
    for i in 0..m {
        let w = spec.curvature_weight(a[i]);
        weighted.row_mut(i).scale_mut(w);
    }
    let mut h = jac.tr_mul(&weighted);
    let g = lifted_gradient_from_residual(inst, a, spec);
    for k in 0..r {
        let mut block = h.view_mut((k * n, k * n), (n, n));
        block += &g * 2.0;
    }
    linalg::symmetrize(&h)
}

/// `h^l(M) = (1/l) ‖A(M) − b‖_l^l`.
pub fn h_value(inst: &ProblemInstance, m: &DMatrix<f64>, l: u32) -> Result<f64> {
    check_order(l)?;
    Ok(power_sum(&lifted_residual(inst, m)?, l) / f64::from(l))
}

/// `∇h^l(M) = Σ_i ⟨A_i, M − M*⟩^{l−1} A_i`.
pub fn h_gradient(inst: &ProblemInstance, m: &DMatrix<f64>, l: u32) -> Result<DMatrix<f64>> {
    check_order(l)?;
    let a = lifted_residual(inst, m)?;
    Ok(inst.operator.adjoint_unchecked(&a.map(|v| v.powi(l as i32 - 1))))
}

/// `∇^p h^l(M)[N, …, N] = ((l−1)!/(l−p)!) Σ_i ⟨A_i, M − M*⟩^{l−p} ⟨A_i, N⟩^p`.
pub fn h_directional_derivative(
    inst: &ProblemInstance,
    m: &DMatrix<f64>,
    dir: &DMatrix<f64>,
    p: u32,
    l: u32,
) -> Result<f64> {
    check_order(l)?;
    if p == 0 || p > l {
        return param_err(format!("derivative order p must satisfy 1 ≤ p ≤ l = {l}, got {p}"));
    }
    let a = lifted_residual(inst, m)?;
    inst.check_square(dir)?;
    let an = inst.operator.apply_unchecked(dir);
    let ratio: f64 = ((l - p + 1)..l).map(f64::from).product();
    let sum: f64 = a
        .iter()
        .zip(an.iter())
        .map(|(ai, ni)| ai.powi((l - p) as i32) * ni.powi(p as i32))
        .sum();
    Ok(ratio * sum)
}

/// Coefficient of `‖A(M − M*)‖_l^l` in the exact expansion of `h^l(M*)` about `M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaylorCoefficient {
    /// `(2^l − 1)/l − 1`, the default. It omits the sign of
    /// `⟨A_i, M − M*⟩^{l−p} = (−⟨A_i, M* − M⟩)^{l−p}` and matches the exact
    /// value only at `l = 2`.
    AsPrinted,
    /// `Σ_{p=2}^{l} (−1)^p C(l,p)/l = (l − 1)/l`.
    Exact,
}

impl TaylorCoefficient {
    pub fn value(self, l: u32) -> f64 {
        let lf = f64::from(l);
        match self {
            TaylorCoefficient::AsPrinted => (2f64.powi(l as i32) - 1.0) / lf - 1.0,
            TaylorCoefficient::Exact => (lf - 1.0) / lf,
        }
    }
}

/// `h^l(M*) − [h^l(M) + ⟨∇h^l(M), M* − M⟩ + κ_l ‖A(M − M*)‖_l^l]` with the
/// default coefficient `κ_l = (2^l − 1)/l − 1`.
pub fn taylor_identity_residual(inst: &ProblemInstance, m: &DMatrix<f64>, l: u32) -> Result<f64> {
    taylor_identity_residual_with(inst, m, l, TaylorCoefficient::AsPrinted)
}

pub fn taylor_identity_residual_with(
    inst: &ProblemInstance,
    m: &DMatrix<f64>,
    l: u32,
    coefficient: TaylorCoefficient,
) -> Result<f64> {
    let at_truth = h_value(inst, &inst.mstar, l)?;
    let at_m = h_value(inst, m, l)?;
    let grad = h_gradient(inst, m, l)?;
    let diff = m - &inst.mstar;
    let lifted = power_sum(&inst.operator.apply_unchecked(&diff), l);
    Ok(at_truth - (at_m - grad.dot(&diff) + coefficient.value(l) * lifted))
}

/// `C(l) = m^{(2−l)/2} ((2^l − 1)/l − 1)` (the default coefficient).
pub fn c_of_l(l: u32, m: usize) -> f64 {
    c_of_l_with(l, m, TaylorCoefficient::AsPrinted)
}

/// `m^{(2−l)/2} κ_l` for either Taylor coefficient.
pub fn c_of_l_with(l: u32, m: usize, coefficient: TaylorCoefficient) -> f64 {
    debug_assert!(l >= 2 && l % 2 == 0);
    (m as f64).powf((2.0 - f64::from(l)) / 2.0) * coefficient.value(l)
}

/// `g(x) = (1/l)(x² − a)^l` and its first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarDerivatives {
    pub g: f64,
    pub dg: f64,
    pub d2g: f64,
}

pub fn scalar_demo(x: f64, a: f64, l: u32) -> Result<ScalarDerivatives> {
    check_order(l)?;
    let li = l as i32;
    let s = x * x - a;
    Ok(ScalarDerivatives {
        g: s.powi(li) / f64::from(l),
        dg: 2.0 * x * s.powi(li - 1),
        d2g: 2.0 * s.powi(li - 2) * (f64::from(l - 1) * 2.0 * x * x + s),
    })
}
