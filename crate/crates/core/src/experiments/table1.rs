//! Hessian spectra at spurious minima and at the ground truth, across λ.

use std::io::Write;

use nalgebra::DMatrix;

use super::config::{ExperimentConfig, ExperimentKind, OperatorKindConfig};
use super::{csv_bytes, OutputFile, NOT_FOUND};
use crate::error::Result;
use crate::landscape;
use crate::linalg::{self, fmt_f64};
use crate::losses::{self, LossSpec};
use crate::operators::{make_instance, ProblemInstance};
use crate::optimizer::{self, PgdConfig, SpuriousPoint};

pub const DEFAULT_LAMBDAS: [f64; 4] = [0.0, 0.5, 5.0, 50.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpuriousSpectrum {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub distance: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table1Row {
    pub n: usize,
    pub lambda: f64,
    pub spurious: Option<SpuriousSpectrum>,
    /// The spurious factor itself, when found.
    pub point: Option<DMatrix<f64>>,
    pub truth_min: f64,
    pub truth_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table1Result {
    pub rows: Vec<Table1Row>,
}

impl Table1Result {
    /// Header `n,lambda,lambda_min_spurious,lambda_max_spurious,lambda_min_truth,lambda_max_truth`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "n,lambda,lambda_min_spurious,lambda_max_spurious,lambda_min_truth,lambda_max_truth")?;
        for r in &self.rows {
            let (a, b) = match r.spurious {
                Some(s) => (fmt_f64(s.lambda_min), fmt_f64(s.lambda_max)),
                None => (NOT_FOUND.to_string(), NOT_FOUND.to_string()),
            };
            writeln!(w, "{},{},{},{},{},{}", r.n, fmt_f64(r.lambda), a, b, fmt_f64(r.truth_min), fmt_f64(r.truth_max))?;
        }
        Ok(())
    }

    pub fn files(&self) -> Vec<OutputFile> {
        vec![OutputFile::new("table1.csv", csv_bytes(|w| self.write_csv(w)))]
    }
}

/// Optimizer defaults for the spurious-point search: a unit-scale random start
/// so runs land in many basins, not only the one the origin saddle feeds.
fn search_defaults() -> PgdConfig {
    PgdConfig { init_scale: 1.0, step_factor: 0.05, max_iters: 200_000, ..PgdConfig::default() }
}

fn instance_for(cfg: &ExperimentConfig, n: usize) -> Result<ProblemInstance> {
    let op = cfg.build_operator(OperatorKindConfig::EpsilonMask, Some(n))?;
    make_instance(op, cfg.ground_truth(n)?, cfg.search_rank())
}

/// Among the retained points, the one with the smallest objective value
/// (ties broken by discovery order).
fn pick(inst: &ProblemInstance, spec: &LossSpec, points: Vec<SpuriousPoint>) -> Result<Option<SpuriousPoint>> {
    let mut best: Option<(f64, SpuriousPoint)> = None;
    for p in points {
        let f = losses::f_lambda_value(inst, &p.x, spec)?;
        if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
            best = Some((f, p));
        }
    }
    Ok(best.map(|(_, p)| p))
}

/// For each `n` the first λ gets a multi-start search; every later λ first
/// continues from the previous λ's point (gradient descent at the new λ) and
/// falls back to a fresh multi-start search if that does not yield a
/// spurious second-order point.
pub fn run_table1(cfg: &ExperimentConfig) -> Result<Table1Result> {
    cfg.expect_kind(ExperimentKind::Table1).or_else(|_| cfg.expect_kind(ExperimentKind::Ratio))?;
    let mut cfg = cfg.clone();
    cfg.operator.epsilon.get_or_insert(0.3);
    let n_values = cfg.table1.n_values.clone().unwrap_or_else(|| vec![3, 5]);
    let n_starts = cfg.table1.n_starts.unwrap_or(32);
    let specs = cfg.loss_specs(&DEFAULT_LAMBDAS)?;
    let opt = cfg.pgd_config(search_defaults())?;
    if n_values.is_empty() || n_starts == 0 {
        return Err(crate::Error::Config("table1.n_values and table1.n_starts must be non-empty".into()));
    }

    let mut rows = Vec::new();
    for &n in &n_values {
        let inst = instance_for(&cfg, n)?;
        let grad_tol = cfg.table1.grad_tol.unwrap_or_else(|| landscape::default_grad_tol(&inst));
        let eig_tol = cfg.table1.eig_tol.unwrap_or(1e-6);
        let truth = inst.exact_factor();
        let mut prev: Option<DMatrix<f64>> = None;
        for spec in &specs {
            let h = losses::hessian_matrix(&inst, &truth, spec)?;
            let truth_eig = linalg::sym_eigenvalues(&h);

            let mut found = Vec::new();
            if let Some(x) = &prev {
                found = optimizer::find_spurious_minima_from(&inst, spec, std::slice::from_ref(x), &opt, grad_tol, eig_tol)?;
            }
            if found.is_empty() {
                found = optimizer::find_spurious_minima(&inst, spec, n_starts, &opt, grad_tol, eig_tol)?;
            }
            let chosen = pick(&inst, spec, found)?;
            prev = chosen.as_ref().map(|p| p.x.clone());
            rows.push(Table1Row {
                n,
                lambda: spec.lambda(),
                spurious: chosen.as_ref().map(|p| SpuriousSpectrum {
                    lambda_min: p.report.lambda_min,
                    lambda_max: p.report.lambda_max,
                    distance: p.report.distance,
                    grad_norm: p.report.grad_norm,
                }),
                point: chosen.map(|p| p.x),
                truth_min: truth_eig[0],
                truth_max: truth_eig[truth_eig.len() - 1],
            });
        }
    }
    Ok(Table1Result { rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioResult {
    /// `(n, λ, λ_max/λ_min)` at the spurious point.
    pub rows: Vec<(usize, f64, f64)>,
    /// One message per skipped `NOT_FOUND` row.
    pub warnings: Vec<String>,
}

impl RatioResult {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "n,lambda,ratio")?;
        for (n, lam, ratio) in &self.rows {
            writeln!(w, "{},{},{}", n, fmt_f64(*lam), fmt_f64(*ratio))?;
        }
        Ok(())
    }

    pub fn files(&self) -> Vec<OutputFile> {
        vec![OutputFile::new("ratio.csv", csv_bytes(|w| self.write_csv(w)))]
    }
}

impl From<&Table1Result> for RatioResult {
    fn from(t: &Table1Result) -> Self {
        let mut rows = Vec::new();
        let mut warnings = Vec::new();
        for r in &t.rows {
            match r.spurious {
                Some(s) => rows.push((r.n, r.lambda, s.lambda_max / s.lambda_min)),
                None => warnings.push(format!("n={} lambda={}: no spurious point, row skipped", r.n, r.lambda)),
            }
        }
        RatioResult { rows, warnings }
    }
}

/// Condition ratio `λ_max/λ_min` at the spurious points of [`run_table1`].
pub fn run_ratio(cfg: &ExperimentConfig) -> Result<RatioResult> {
    Ok(RatioResult::from(&run_table1(cfg)?))
}
