//! Sensing operators `A(·)`, problem instances and empirical RIP estimation.
//!
//! An operator maps an `n × n` matrix to `m` measurements. Two forms exist:
//!
//! * **explicit**: `m` symmetric sensing matrices, `A(M)_i = ⟨A_i, M⟩`;
//! * **ε-mask**: the structured operator that keeps the entries of `M` on the
//!   index set `Ω = {(i,i), (i,2k), (2k,i)}` (1-based, `k ≤ ⌊n/2⌋`) and scales
//!   every other entry by `ε`. Its `m = n²` measurements are the scaled entries
//!   in row-major order: measurement `i·n + j` is `w_ij · M_ij`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::error::{dim_err, param_err, Error, Result};
use crate::linalg::{self, fmt_f64, gaussian_matrix, seeded_rng};

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorForm {
    Explicit {
        matrices: Vec<DMatrix<f64>>,
        /// `m × n²`, row `i` is `vec(A_i)` (column-major).
        stacked: DMatrix<f64>,
    },
    EpsilonMask {
        epsilon: f64,
        /// `w_ij ∈ {1, ε}`.
        weights: DMatrix<f64>,
    },
}

/// How an operator was produced; drives serialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OperatorKind {
    Gaussian { seed: u64 },
    EpsilonMask { epsilon: f64 },
    Explicit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensingOperator {
    n: usize,
    m: usize,
    form: OperatorForm,
    kind: OperatorKind,
    claimed_delta: Option<f64>,
    certified_delta: Option<f64>,
}

impl SensingOperator {
    /// Explicit operator from symmetric sensing matrices.
    pub fn from_matrices(matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = matrices.first() else {
            return param_err("an explicit operator needs at least one sensing matrix");
        };
        let n = first.nrows();
        if n == 0 {
            return param_err("sensing matrices must be non-empty");
        }
        for (i, a) in matrices.iter().enumerate() {
            if a.nrows() != n || a.ncols() != n {
                return dim_err(format!(
                    "sensing matrix {i} is {}x{}, expected {n}x{n}",
                    a.nrows(),
                    a.ncols()
                ));
            }
            if linalg::asymmetry(a) != 0.0 {
                return param_err(format!("sensing matrix {i} is not symmetric"));
            }
        }
        let m = matrices.len();
        let mut stacked = DMatrix::zeros(m, n * n);
        for (i, a) in matrices.iter().enumerate() {
            for (idx, v) in a.iter().enumerate() {
                stacked[(i, idx)] = *v;
            }
        }
        Ok(Self {
            n,
            m,
            form: OperatorForm::Explicit { matrices, stacked },
            kind: OperatorKind::Explicit,
            claimed_delta: None,
            certified_delta: None,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn form(&self) -> &OperatorForm {
        &self.form
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    /// RIP constant asserted in the literature for this operator family, if any.
    /// Stored as metadata only.
    pub fn claimed_delta(&self) -> Option<f64> {
        self.claimed_delta
    }

    /// An unscaled RIP constant that provably holds for every matrix, if one is
    /// known from the operator's structure: `0` for the isometry and `1 − ε²` for
    /// the ε-mask (whose ratio `‖A(M)‖²/‖M‖_F²` lies in `[ε², 1]`).
    pub fn certified_delta(&self) -> Option<f64> {
        self.certified_delta
    }

    pub fn with_claimed_delta(mut self, delta: Option<f64>) -> Self {
        self.claimed_delta = delta;
        self
    }

    pub fn with_certified_delta(mut self, delta: Option<f64>) -> Self {
        self.certified_delta = delta;
        self
    }

    /// Sensing matrix `A_i`. For the ε-mask this is `w_ij E_ij` for measurement
    /// `i·n + j`.
    pub fn sensing_matrix(&self, i: usize) -> DMatrix<f64> {
        match &self.form {
            OperatorForm::Explicit { matrices, .. } => matrices[i].clone(),
            OperatorForm::EpsilonMask { weights, .. } => {
                let (r, c) = (i / self.n, i % self.n);
                let mut e = DMatrix::zeros(self.n, self.n);
                e[(r, c)] = weights[(r, c)];
                e
            }
        }
    }

    fn check_square(&self, mat: &DMatrix<f64>) -> Result<()> {
        if mat.nrows() != self.n || mat.ncols() != self.n {
            return dim_err(format!(
                "operator expects {n}x{n} matrices, got {}x{}",
                mat.nrows(),
                mat.ncols(),
                n = self.n
            ));
        }
        Ok(())
    }

    pub fn apply(&self, mat: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.check_square(mat)?;
        Ok(self.apply_unchecked(mat))
    }

    pub(crate) fn apply_unchecked(&self, mat: &DMatrix<f64>) -> DVector<f64> {
        match &self.form {
            OperatorForm::Explicit { stacked, .. } => {
                let v = DVector::from_column_slice(mat.as_slice());
                stacked * v
            }
            OperatorForm::EpsilonMask { weights, .. } => {
                let n = self.n;
                DVector::from_fn(n * n, |idx, _| {
                    let (i, j) = (idx / n, idx % n);
                    weights[(i, j)] * mat[(i, j)]
                })
            }
        }
    }

    /// `Σ_i y_i A_i`, projected onto symmetric matrices.
    ///
    /// For explicit operators the sum is already symmetric. For the ε-mask the
    /// raw sum `w ∘ reshape(y)` is symmetrized; on symmetric arguments this is
    /// still the adjoint, `⟨A(M), y⟩ = ⟨M, Aᵀ(y)⟩`.
    pub fn adjoint(&self, y: &DVector<f64>) -> Result<DMatrix<f64>> {
        if y.len() != self.m {
            return dim_err(format!("adjoint expects {} measurements, got {}", self.m, y.len()));
        }
        Ok(self.adjoint_unchecked(y))
    }

    pub(crate) fn adjoint_unchecked(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n;
        match &self.form {
            OperatorForm::Explicit { stacked, .. } => {
                let v = stacked.tr_mul(y);
                DMatrix::from_column_slice(n, n, v.as_slice())
            }
            OperatorForm::EpsilonMask { weights, .. } => DMatrix::from_fn(n, n, |i, j| {
                0.5 * (weights[(i, j)] * y[i * n + j] + weights[(j, i)] * y[j * n + i])
            }),
        }
    }

    /// Structured text form: `kind`, `n`, `m`, then `epsilon` or `seed`, and for
    /// explicit operators `entries`, every `A_i` in row-major order, written with
    /// 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "n = {}", self.n);
        let _ = writeln!(out, "m = {}", self.m);
        match self.kind {
            OperatorKind::Gaussian { seed } => {
                out.insert_str(0, "kind = \"gaussian\"\n");
                let _ = writeln!(out, "seed = {seed}");
            }
            OperatorKind::EpsilonMask { epsilon } => {
                out.insert_str(0, "kind = \"epsilon_mask\"\n");
                let _ = writeln!(out, "epsilon = {}", fmt_f64(epsilon));
            }
            OperatorKind::Explicit => {
                out.insert_str(0, "kind = \"explicit\"\n");
                if let Some(d) = self.claimed_delta {
                    let _ = writeln!(out, "claimed_delta = {}", fmt_f64(d));
                }
                if let Some(d) = self.certified_delta {
                    let _ = writeln!(out, "certified_delta = {}", fmt_f64(d));
                }
                out.push_str("entries = [\n");
                for i in 0..self.m {
                    let a = self.sensing_matrix(i);
                    for r in 0..self.n {
                        let row: Vec<String> = (0..self.n).map(|c| fmt_f64(a[(r, c)])).collect();
                        let _ = writeln!(out, "  {},", row.join(", "));
                    }
                }
                out.push_str("]\n");
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            kind: String,
            n: usize,
            m: usize,
            epsilon: Option<f64>,
            seed: Option<u64>,
            claimed_delta: Option<f64>,
            certified_delta: Option<f64>,
            entries: Option<Vec<f64>>,
        }
        let raw: Raw = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let op = match raw.kind.as_str() {
            "gaussian" => {
                let seed = raw.seed.ok_or_else(|| Error::Parse("gaussian operator needs `seed`".into()))?;
                make_gaussian_operator(raw.n, raw.m, seed)?
            }
            "epsilon_mask" => {
                let eps = raw
                    .epsilon
                    .ok_or_else(|| Error::Parse("epsilon_mask operator needs `epsilon`".into()))?;
                make_epsilon_operator(raw.n, eps)?
            }
            "explicit" => {
                let entries = raw
                    .entries
                    .ok_or_else(|| Error::Parse("explicit operator needs `entries`".into()))?;
                let nn = raw.n * raw.n;
                if entries.len() != raw.m * nn {
                    return Err(Error::Parse(format!(
                        "expected {} entries for m={} n={}, found {}",
                        raw.m * nn,
                        raw.m,
                        raw.n,
                        entries.len()
                    )));
                }
                let matrices = entries
                    .chunks(nn)
                    .map(|c| DMatrix::from_row_slice(raw.n, raw.n, c))
                    .collect();
                SensingOperator::from_matrices(matrices)?
                    .with_claimed_delta(raw.claimed_delta)
                    .with_certified_delta(raw.certified_delta)
            }
            other => return Err(Error::Parse(format!("unknown operator kind `{other}`"))),
        };
        if op.n != raw.n || op.m != raw.m {
            return Err(Error::Parse(format!(
                "header says n={} m={}, operator has n={} m={}",
                raw.n, raw.m, op.n, op.m
            )));
        }
        Ok(op)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Whether `(i, j)` (0-based) lies in `Ω`. The 1-based indices `2k` are the
/// odd 0-based indices.
pub fn in_mask_support(i: usize, j: usize) -> bool {
    i == j || i % 2 == 1 || j % 2 == 1
}

/// ε-mask operator; the claimed `δ_2r = (1−ε)/(1+ε)` is recorded as metadata.
pub fn make_epsilon_operator(n: usize, epsilon: f64) -> Result<SensingOperator> {
    if n < 2 {
        return param_err(format!("ε-mask operator needs n ≥ 2, got {n}"));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return param_err(format!("ε must lie in (0, 1), got {epsilon}"));
    }
    let weights = DMatrix::from_fn(n, n, |i, j| if in_mask_support(i, j) { 1.0 } else { epsilon });
    Ok(SensingOperator {
        n,
        m: n * n,
        form: OperatorForm::EpsilonMask { epsilon, weights },
        kind: OperatorKind::EpsilonMask { epsilon },
        claimed_delta: Some((1.0 - epsilon) / (1.0 + epsilon)),
        certified_delta: Some(1.0 - epsilon * epsilon),
    })
}

/// `m` symmetrized Gaussian sensing matrices `(G + Gᵀ) / (2√m)`.
pub fn make_gaussian_operator(n: usize, m: usize, seed: u64) -> Result<SensingOperator> {
    if n == 0 || m == 0 {
        return param_err(format!("gaussian operator needs n, m ≥ 1 (got n={n}, m={m})"));
    }
    let mut rng = seeded_rng(seed);
    let scale = 0.5 / (m as f64).sqrt();
    let matrices = (0..m)
        .map(|_| {
            let g = gaussian_matrix(&mut rng, n, n);
            (&g + g.transpose()) * scale
        })
        .collect();
    let mut op = SensingOperator::from_matrices(matrices)?;
    op.kind = OperatorKind::Gaussian { seed };
    Ok(op)
}

/// Orthonormal basis of the symmetric matrices, `E_ii` and `(E_ij + E_ji)/√2`
/// for `i < j`: `‖A(M)‖ = ‖M‖_F` for every symmetric `M`, so `δ = 0` at every
/// order. `m = n(n+1)/2`.
pub fn isometry_operator(n: usize) -> Result<SensingOperator> {
    if n == 0 {
        return param_err("isometry needs n ≥ 1");
    }
    let mut matrices = Vec::with_capacity(n * (n + 1) / 2);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..n {
        for j in i..n {
            let mut a = DMatrix::zeros(n, n);
            if i == j {
                a[(i, i)] = 1.0;
            } else {
                a[(i, j)] = h;
                a[(j, i)] = h;
            }
            matrices.push(a);
        }
    }
    Ok(SensingOperator::from_matrices(matrices)?
        .with_claimed_delta(Some(0.0))
        .with_certified_delta(Some(0.0)))
}

/// Result of [`estimate_rip_constant`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RipEstimate {
    pub delta_hat: f64,
    pub scale_hat: f64,
    pub rho_min: f64,
    pub rho_max: f64,
}

/// Sampled lower bound on the best-scaled RIP constant at order `p`.
///
/// Draws `samples` matrices `YYᵀ − ZZᵀ` (`Y` has `⌈p/2⌉` Gaussian columns, `Z`
/// has `⌊p/2⌋`), so each has rank at most `p` and may be indefinite. With
/// `ρ = ‖A(M)‖² / ‖M‖_F²` the result is `ĉ = 2/(ρ_max + ρ_min)` and
/// `δ̂ = (ρ_max − ρ_min)/(ρ_max + ρ_min)`: `ĉ·A` satisfies the two-sided bound
/// with `δ̂` on every sample.
pub fn estimate_rip_constant(op: &SensingOperator, p: usize, samples: usize, seed: u64) -> Result<RipEstimate> {
    if p == 0 || p > op.n() {
        return param_err(format!("RIP order p must satisfy 1 ≤ p ≤ n = {}, got {p}", op.n()));
    }
    if samples < 2 {
        return param_err(format!("need at least 2 samples, got {samples}"));
    }
    let mut rng = seeded_rng(seed);
    let (py, pz) = (p.div_ceil(2), p / 2);
    let mut rho_min = f64::INFINITY;
    let mut rho_max = f64::NEG_INFINITY;
    for _ in 0..samples {
        let y = gaussian_matrix(&mut rng, op.n(), py);
        let z = gaussian_matrix(&mut rng, op.n(), pz);
        let mut mat = &y * y.transpose() - &z * z.transpose();
        let norm = mat.norm();
        if norm == 0.0 {
            continue;
        }
        mat /= norm;
        let rho = op.apply_unchecked(&mat).norm_squared();
        rho_min = rho_min.min(rho);
        rho_max = rho_max.max(rho);
    }
    if !rho_min.is_finite() {
        return param_err("every RIP sample was the zero matrix");
    }
    if rho_max - rho_min <= 1e-12 * rho_max {
        return Ok(RipEstimate { delta_hat: 0.0, scale_hat: 1.0 / rho_max, rho_min, rho_max });
    }
    Ok(RipEstimate {
        delta_hat: (rho_max - rho_min) / (rho_max + rho_min),
        scale_hat: 2.0 / (rho_max + rho_min),
        rho_min,
        rho_max,
    })
}

/// Operator, ground truth `M* = X*X*ᵀ`, measurements `b = A(M*)`, true rank
/// `r*` and search rank `r`.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub operator: SensingOperator,
    pub mstar: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Numerical rank of `M*` (0 only for the zero ground truth).
    pub rstar: usize,
    pub r: usize,
    /// The factor `M*` was built from (`n × r*'` as supplied).
    pub xstar: DMatrix<f64>,
}

/// Relative eigenvalue threshold used for ranks of PSD matrices.
pub const RANK_TOL: f64 = 1e-10;

pub fn make_instance(op: SensingOperator, xstar: DMatrix<f64>, r: usize) -> Result<ProblemInstance> {
    let inst = make_underparameterized_instance(op, xstar, r)?;
    if inst.r < inst.rstar {
        return param_err(format!("search rank r = {} is below the true rank r* = {}", inst.r, inst.rstar));
    }
    Ok(inst)
}

/// Like [`make_instance`] but accepts a search rank below `rank(M*)`. The
/// curvature checks stay meaningful there (a rank-1 factor fitted to a rank-2
/// ground truth has saddles too); only exact recovery is impossible.
pub fn make_underparameterized_instance(op: SensingOperator, xstar: DMatrix<f64>, r: usize) -> Result<ProblemInstance> {
    if xstar.nrows() != op.n() {
        return dim_err(format!(
            "ground-truth factor has {} rows, operator has n = {}",
            xstar.nrows(),
            op.n()
        ));
    }
    if r == 0 {
        return param_err("search rank r must be ≥ 1");
    }
    let mstar = &xstar * xstar.transpose();
    let rstar = linalg::numerical_rank_psd(&mstar, RANK_TOL);
    let b = op.apply_unchecked(&mstar);
    Ok(ProblemInstance { operator: op, mstar, b, rstar, r, xstar })
}

impl ProblemInstance {
    pub fn n(&self) -> usize {
        self.operator.n()
    }

    pub fn m(&self) -> usize {
        self.operator.m()
    }

    /// An exact-fit factor of shape `n × r` (`X*` padded with zero columns;
    /// truncated, and so not exact, when `r < r*`).
    pub fn exact_factor(&self) -> DMatrix<f64> {
        pad_factor(&self.xstar, self.r)
    }

    pub(crate) fn check_factor(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.nrows() != self.n() || x.ncols() != self.r {
            return dim_err(format!(
                "factor is {}x{}, instance expects {}x{}",
                x.nrows(),
                x.ncols(),
                self.n(),
                self.r
            ));
        }
        Ok(())
    }

    pub(crate) fn check_square(&self, mat: &DMatrix<f64>) -> Result<()> {
        self.operator.check_square(mat)
    }
}

/// Pads (or keeps) `x` to `r` columns with zeros. Columns beyond `r` are dropped.
pub fn pad_factor(x: &DMatrix<f64>, r: usize) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), r, |i, k| if k < x.ncols() { x[(i, k)] } else { 0.0 })
}

/// `x_i = 1` on the 1-based odd indices `1, 3, 5, …` and 0 elsewhere. These
/// coordinates pair up only outside `Ω`, which is what gives the ε-mask its
/// sign-flip spurious minima.
pub fn odd_index_indicator(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, 1, |i, _| if i % 2 == 0 { 1.0 } else { 0.0 })
}

/// Seeded Gaussian factor `n × rank` scaled so that `‖X‖_F = scale`.
pub fn random_factor(n: usize, rank: usize, scale: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = seeded_rng(seed);
    let x = gaussian_matrix(&mut rng, n, rank);
    let norm = x.norm();
    if norm == 0.0 {
        x
    } else {
        x * (scale / norm)
    }
}
