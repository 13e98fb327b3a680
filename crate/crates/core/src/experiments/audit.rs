//! Mechanical check of the strict-saddle criteria on generated critical points.
//!
//! Point families:
//! * the origin, on isometries with random ground truths and on ε-masks;
//! * PCA points `X̂ = [√d_i e_i]_{i∈S}` under the isometry, for diagonal `M*`
//!   (critical for every loss) and rotated `M*` (critical for least squares);
//! * gradient-descent limits: runs started inside a coordinate subspace of a
//!   diagonal `M*`, and spurious second-order points of ε-masks found by
//!   multi-start search at each loss.
//!
//! Only points whose gradient norm is at most `grad_tol` for the loss being
//! checked produce rows.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::config::{ExperimentConfig, ExperimentKind};
use super::{csv_bytes, OutputFile};
use crate::error::{Error, Result};
use crate::landscape::{self, TheoremVerdict};
use crate::linalg::{self, fmt_f64};
use crate::losses::{self, LossSpec, TaylorCoefficient};
use crate::operators::{
    isometry_operator, make_epsilon_operator, make_instance, make_underparameterized_instance,
    odd_index_indicator, random_factor, ProblemInstance,
};
use crate::optimizer::{self, PgdConfig};

pub const DEFAULT_ORDERS: [u32; 2] = [2, 4];
pub const DEFAULT_LAMBDAS: [f64; 3] = [0.0, 0.5, 5.0];
pub const DEFAULT_GRAD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    Thm1,
    Thm4,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditRow {
    /// `<point>/<check>`; thm4 rows carry `-l<l>-lam<λ>`.
    pub point_id: String,
    pub point: usize,
    pub check: Check,
    pub spec: LossSpec,
    pub verdict: TheoremVerdict,
    /// Hessian form along the escape direction, when the criterion holds.
    pub escape_form: Option<f64>,
    /// The same check with the exact Taylor constant (thm4 rows only).
    pub exact: Option<TheoremVerdict>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditResult {
    pub rows: Vec<AuditRow>,
    pub point_ids: Vec<String>,
    /// Points with at least one row.
    pub points_audited: usize,
    /// (point, check, spec) combinations dropped for a large gradient.
    pub skipped: usize,
    pub grad_tol: f64,
}

impl AuditResult {
    pub fn inconsistent(&self) -> Vec<&AuditRow> {
        self.rows.iter().filter(|r| !r.verdict.consistent).collect()
    }

    pub fn all_consistent(&self) -> bool {
        self.rows.iter().all(|r| r.verdict.consistent)
    }

    /// Rows whose criterion holds but whose escape direction is not strictly
    /// descending in curvature.
    pub fn escape_failures(&self) -> Vec<&AuditRow> {
        self.rows
            .iter()
            .filter(|r| r.verdict.criterion_satisfied && !r.escape_form.is_some_and(|q| q < 0.0))
            .collect()
    }

    /// Largest `|bound_thm4(λ=0) − bound_thm1|` over points having both rows.
    pub fn reduction_gap(&self) -> f64 {
        let mut gap: f64 = 0.0;
        for r4 in self.rows.iter().filter(|r| r.check == Check::Thm4 && r.spec.lambda() == 0.0) {
            if let Some(r1) = self.rows.iter().find(|r| r.check == Check::Thm1 && r.point == r4.point) {
                let (a, b) = (r1.verdict.predicted_bound, r4.verdict.predicted_bound);
                if a.is_finite() || b.is_finite() {
                    gap = gap.max((a - b).abs());
                }
            }
        }
        gap
    }

    fn write_rows<W: Write>(&self, mut w: W, exact: bool) -> std::io::Result<()> {
        writeln!(w, "point_id,grad_norm,D,sigma_r,criterion,bound,lambda_min,consistent")?;
        for r in &self.rows {
            let v = if exact {
                match &r.exact {
                    Some(v) => v,
                    None => continue,
                }
            } else {
                &r.verdict
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.point_id,
                fmt_f64(v.grad_norm),
                fmt_f64(v.distance),
                fmt_f64(v.sigma_r),
                v.criterion_satisfied,
                fmt_f64(v.predicted_bound),
                fmt_f64(v.observed_lambda_min),
                v.consistent
            )?;
        }
        Ok(())
    }

    /// Header `point_id,grad_norm,D,sigma_r,criterion,bound,lambda_min,consistent`.
    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        self.write_rows(w, false)
    }

    pub fn files(&self) -> Vec<OutputFile> {
        let escape = csv_bytes(|w| {
            writeln!(w, "point_id,escape_form")?;
            for r in self.rows.iter().filter(|r| r.verdict.criterion_satisfied) {
                let q = r.escape_form.map_or_else(|| "NaN".into(), fmt_f64);
                writeln!(w, "{},{}", r.point_id, q)?;
            }
            Ok(())
        });
        vec![
            OutputFile::new("audit_verdicts.csv", csv_bytes(|w| self.write_rows(w, false))),
            OutputFile::new("audit_exact_constant.csv", csv_bytes(|w| self.write_rows(w, true))),
            OutputFile::new("audit_escape.csv", escape),
        ]
    }
}

struct Candidate {
    id: String,
    inst: usize,
    x: DMatrix<f64>,
    delta: f64,
    /// Losses at which the point was constructed to be critical; `None` = all.
    only: Option<Vec<LossSpec>>,
}

struct Population {
    instances: Vec<ProblemInstance>,
    points: Vec<Candidate>,
}

impl Population {
    fn add_instance(&mut self, inst: ProblemInstance) -> usize {
        self.instances.push(inst);
        self.instances.len() - 1
    }

    fn add(&mut self, id: String, inst: usize, x: DMatrix<f64>, delta: f64, only: Option<Vec<LossSpec>>) {
        self.points.push(Candidate { id, inst, x, delta, only });
    }
}

fn diag_instance(d: &[f64], r: usize) -> Result<ProblemInstance> {
    let n = d.len();
    let xs = DMatrix::from_fn(n, n, |i, j| if i == j { d[i].sqrt() } else { 0.0 });
    make_underparameterized_instance(isometry_operator(n)?, xs, r)
}

/// `Q diag(d) Qᵀ` with a seeded orthogonal `Q`.
fn rotated_instance(d: &[f64], r: usize, seed: u64) -> Result<(ProblemInstance, DMatrix<f64>)> {
    let n = d.len();
    let mut rng = linalg::seeded_rng(seed);
    let q = linalg::gaussian_matrix(&mut rng, n, n).qr().q();
    let xs = &q * DMatrix::from_diagonal(&DVector::from_iterator(n, d.iter().map(|v| v.sqrt())));
    Ok((make_underparameterized_instance(isometry_operator(n)?, xs, r)?, q))
}

/// Non-empty index subsets of `0..n` of size at most `k`, in lexicographic order.
fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for mask in 1u32..(1 << n) {
        let s: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        if s.len() <= k {
            out.push(s);
        }
    }
    out.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
    out
}

fn pca_factor(basis: &DMatrix<f64>, d: &[f64], subset: &[usize], r: usize) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(basis.nrows(), r);
    for (col, &i) in subset.iter().enumerate() {
        x.set_column(col, &(basis.column(i) * d[i].sqrt()));
    }
    x
}

fn generate(seed: u64, specs: &[LossSpec]) -> Result<Population> {
    let mut pop = Population { instances: Vec::new(), points: Vec::new() };

    // Origin points.
    let k = pop.add_instance(make_instance(isometry_operator(1)?, DMatrix::from_element(1, 1, 1.0), 1)?);
    pop.add("iso-n1/zero".into(), k, DMatrix::zeros(1, 1), 0.0, None);
    for n in 2..=6usize {
        for (rank, scale) in [(1usize, 1.0), (2, 3.0)] {
            let xs = random_factor(n, rank, scale, seed.wrapping_add((10 * n + rank) as u64));
            let k = pop.add_instance(make_instance(isometry_operator(n)?, xs, rank)?);
            pop.add(format!("iso-n{n}-rank{rank}/zero"), k, DMatrix::zeros(n, rank), 0.0, None);
        }
    }
    for n in [3usize, 5, 7, 9, 21] {
        for eps in [0.1, 0.2, 0.3, 0.5] {
            let op = make_epsilon_operator(n, eps)?;
            let delta = op.certified_delta().expect("ε-mask carries a certified constant");
            let k = pop.add_instance(make_instance(op, odd_index_indicator(n), 1)?);
            pop.add(format!("eps{eps}-n{n}/zero"), k, DMatrix::zeros(n, 1), delta, None);
        }
    }
    {
        let op = make_epsilon_operator(21, 0.1)?;
        let delta = op.claimed_delta().expect("ε-mask carries a claimed constant");
        let k = pop.add_instance(make_instance(op, odd_index_indicator(21), 1)?);
        pop.add("eps0.1-n21-claimed/zero".into(), k, DMatrix::zeros(21, 1), delta, None);
    }

    // PCA points under the isometry.
    let diagonal: [(&[f64], usize); 5] =
        [(&[4.0, 3.0, 2.0, 1.0], 2), (&[5.0, 1.0, 0.5], 1), (&[5.0, 1.0, 0.5], 2), (&[10.0, 0.1], 1), (&[2.0, 1.0], 1)];
    for (t, (d, r)) in diagonal.iter().enumerate() {
        let k = pop.add_instance(diag_instance(d, *r)?);
        let basis = DMatrix::identity(d.len(), d.len());
        for s in subsets(d.len(), *r) {
            let x = pca_factor(&basis, d, &s, *r);
            pop.add(format!("pca-diag{t}/{s:?}").replace(", ", "+"), k, x, 0.0, None);
        }
    }
    let least_squares: Vec<LossSpec> = specs.iter().copied().filter(|s| s.lambda() == 0.0).collect();
    let rotated: [(&[f64], usize); 3] =
        [(&[4.0, 3.0, 2.0, 1.0], 2), (&[3.0, 2.0, 1.0, 0.5, 0.25], 2), (&[2.0, 1.5, 1.0, 0.5], 3)];
    for (t, (d, r)) in rotated.iter().enumerate() {
        let (inst, q) = rotated_instance(d, *r, seed.wrapping_add(100 + t as u64))?;
        let k = pop.add_instance(inst);
        for s in subsets(d.len(), *r) {
            let x = pca_factor(&q, d, &s, *r);
            pop.add(format!("pca-rot{t}/{s:?}").replace(", ", "+"), k, x, 0.0, Some(least_squares.clone()));
        }
    }

    // Gradient descent restricted to a coordinate subspace of a diagonal M*.
    let d = [4.0, 3.0, 2.0, 1.0];
    let k = pop.add_instance(diag_instance(&d, 2)?);
    let gd = PgdConfig { init_scale: 0.5, stationary_tol: Some(1e-13), max_iters: 200_000, ..PgdConfig::default() };
    for (t, support) in [vec![0usize, 1, 2], vec![1, 2, 3], vec![0, 3], vec![2, 3], vec![1]].iter().enumerate() {
        let mut rng = linalg::seeded_rng(seed.wrapping_add(200 + t as u64));
        let mut x0 = linalg::gaussian_matrix(&mut rng, 4, 2) * gd.init_scale;
        for i in (0..4).filter(|i| !support.contains(i)) {
            x0.row_mut(i).fill(0.0);
        }
        let traj = optimizer::gradient_descent_from(&pop.instances[k], &LossSpec::least_squares(), &gd, x0)?;
        pop.add(format!("gd-support{t}"), k, traj.final_x, 0.0, None);
    }

    // Spurious second-order points of ε-masks, searched at each loss. Losses
    // with λ = 0 coincide, so they share one search.
    let search = PgdConfig { init_scale: 1.0, max_iters: 200_000, seed, ..PgdConfig::default() };
    for n in [3usize, 5] {
        let op = make_epsilon_operator(n, 0.3)?;
        let delta = op.certified_delta().expect("ε-mask carries a certified constant");
        let k = pop.add_instance(make_instance(op, odd_index_indicator(n), 1)?);
        let inst = &pop.instances[k];
        let mut groups: Vec<Vec<LossSpec>> = Vec::new();
        if !least_squares.is_empty() {
            groups.push(least_squares.clone());
        }
        groups.extend(specs.iter().filter(|s| s.lambda() != 0.0).map(|s| vec![*s]));
        let mut found = Vec::new();
        for group in groups {
            let spec = group[0];
            let pts = optimizer::find_spurious_minima(inst, &spec, 8, &search, 1e-10, 1e-6)?;
            for (j, p) in pts.into_iter().enumerate() {
                let tag = format!("eps0.3-n{n}/spurious-l{}-lam{}-{j}", spec.order(), spec.lambda());
                found.push((tag, p.x, group.clone()));
            }
        }
        for (tag, x, group) in found {
            pop.add(tag, k, x, delta, Some(group));
        }
    }
    Ok(pop)
}

fn escape_form(inst: &ProblemInstance, x: &DMatrix<f64>, spec: &LossSpec) -> Result<f64> {
    let dir = landscape::escape_direction(inst, x, spec)?;
    losses::hessian_quadratic_form(inst, x, &dir, spec)
}

fn audit_point(
    pop: &Population,
    index: usize,
    specs: &[LossSpec],
    grad_tol: f64,
) -> Result<(Vec<AuditRow>, usize)> {
    let c = &pop.points[index];
    let inst = &pop.instances[c.inst];
    let mut rows = Vec::new();
    let mut skipped = 0;

    let v = landscape::thm1_check(inst, &c.x, c.delta)?;
    if v.grad_norm <= grad_tol {
        let spec = LossSpec::least_squares();
        let escape = if v.criterion_satisfied { Some(escape_form(inst, &c.x, &spec)?) } else { None };
        rows.push(AuditRow {
            point_id: format!("{}/thm1", c.id),
            point: index,
            check: Check::Thm1,
            spec,
            verdict: v,
            escape_form: escape,
            exact: None,
        });
    } else {
        skipped += 1;
    }

    for spec in specs {
        if c.only.as_ref().is_some_and(|only| !only.contains(spec)) {
            continue;
        }
        let v = landscape::thm4_check(inst, &c.x, c.delta, spec)?;
        if v.grad_norm > grad_tol {
            skipped += 1;
            continue;
        }
        let exact = landscape::thm4_check_with(inst, &c.x, c.delta, spec, TaylorCoefficient::Exact)?;
        let escape = if v.criterion_satisfied || exact.criterion_satisfied {
            Some(escape_form(inst, &c.x, spec)?)
        } else {
            None
        };
        rows.push(AuditRow {
            point_id: format!("{}/thm4-l{}-lam{}", c.id, spec.order(), spec.lambda()),
            point: index,
            check: Check::Thm4,
            spec: *spec,
            verdict: v,
            escape_form: escape,
            exact: Some(exact),
        });
    }
    Ok((rows, skipped))
}

/// Audits every generated point under Theorem-1 and, for each configured
/// `(l, λ)`, Theorem-4 checks. The RIP constant is the operator's certified
/// one (0 for isometries, `1 − ε²` for ε-masks), except for one row that
/// reuses the claimed `(1−ε)/(1+ε)`.
pub fn run_theorem_audit(cfg: &ExperimentConfig) -> Result<AuditResult> {
    cfg.expect_kind(ExperimentKind::TheoremAudit)?;
    let orders = cfg.audit.orders.clone().unwrap_or_else(|| DEFAULT_ORDERS.to_vec());
    let lambdas = cfg.audit.lambdas.clone().unwrap_or_else(|| DEFAULT_LAMBDAS.to_vec());
    let grad_tol = cfg.audit.grad_tol.unwrap_or(DEFAULT_GRAD_TOL);
    if orders.is_empty() || lambdas.is_empty() || !(grad_tol > 0.0) {
        return Err(Error::Config("audit.orders and audit.lambdas must be non-empty, grad_tol > 0".into()));
    }
    let mut specs = Vec::new();
    for &l in &orders {
        for &lam in &lambdas {
            specs.push(LossSpec::new(l, lam).map_err(|e| Error::Config(e.to_string()))?);
        }
    }
    let pop = generate(cfg.seed(), &specs)?;
    let per_point = (0..pop.points.len())
        .into_par_iter()
        .map(|i| audit_point(&pop, i, &specs, grad_tol))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut skipped = 0;
    let mut points_audited = 0;
    for (r, s) in per_point {
        points_audited += usize::from(!r.is_empty());
        rows.extend(r);
        skipped += s;
    }
    Ok(AuditResult {
        rows,
        point_ids: pop.points.iter().map(|c| c.id.clone()).collect(),
        points_audited,
        skipped,
        grad_tol,
    })
}
