//! Minimum-eigenvalue grids around a critical point, one per λ.

use std::io::Write;

use nalgebra::DMatrix;

use super::config::{ExperimentConfig, ExperimentKind, OperatorKindConfig, SweepCenter};
use super::{csv_bytes, OutputFile};
use crate::error::{Error, Result};
use crate::landscape::{self, SweepGrid};
use crate::linalg::fmt_f64;
use crate::operators::make_instance;
use crate::optimizer::{self, PgdConfig};

pub const DEFAULT_LAMBDAS: [f64; 3] = [0.0, 0.5, 5.0];

#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeResult {
    pub center: DMatrix<f64>,
    pub lambdas: Vec<f64>,
    /// One grid per λ, same lattice and directions throughout.
    pub grids: Vec<SweepGrid>,
}

impl LandscapeResult {
    pub fn grid_minima(&self) -> Vec<f64> {
        self.grids.iter().map(SweepGrid::min).collect()
    }

    /// Header `lambda,grid_min,center_lambda_min`.
    pub fn write_summary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "lambda,grid_min,center_lambda_min")?;
        for (lam, g) in self.lambdas.iter().zip(&self.grids) {
            writeln!(w, "{},{},{}", fmt_f64(*lam), fmt_f64(g.min()), fmt_f64(g.center()))?;
        }
        Ok(())
    }

    /// `landscape_summary.csv` plus `landscape_<k>.csv` for the k-th λ.
    pub fn files(&self) -> Vec<OutputFile> {
        let mut out = vec![OutputFile::new("landscape_summary.csv", csv_bytes(|w| self.write_summary(w)))];
        for (k, g) in self.grids.iter().enumerate() {
            out.push(OutputFile::new(format!("landscape_{k}.csv"), csv_bytes(|w| g.write_csv(w))));
        }
        out
    }
}

/// Sweeps the plane through the chosen critical point toward the ground
/// truth. Defaults: ε-mask `n = 21`, `ε = 0.1`, `l = 4`, `λ ∈ {0, 0.5, 5}`,
/// centered at `X̂ = 0`.
pub fn run_landscape(cfg: &ExperimentConfig) -> Result<LandscapeResult> {
    cfg.expect_kind(ExperimentKind::Landscape)?;
    let mut cfg = cfg.clone();
    cfg.operator.n.get_or_insert(21);
    cfg.operator.epsilon.get_or_insert(0.1);
    let op = cfg.build_operator(OperatorKindConfig::EpsilonMask, None)?;
    let n = op.n();
    let inst = make_instance(op, cfg.ground_truth(n)?, cfg.search_rank())?;
    let specs = cfg.loss_specs(&DEFAULT_LAMBDAS)?;
    let half_width = cfg.landscape.half_width.unwrap_or(1.0);
    let grid_points = cfg.landscape.grid_points.unwrap_or(21);

    let center = match cfg.landscape.center.unwrap_or(SweepCenter::Zero) {
        SweepCenter::Zero => DMatrix::zeros(n, inst.r),
        SweepCenter::Spurious => {
            let opt = cfg.pgd_config(PgdConfig { init_scale: 1.0, ..PgdConfig::default() })?;
            let grad_tol = landscape::default_grad_tol(&inst);
            optimizer::find_spurious_minima(&inst, &specs[0], 16, &opt, grad_tol, 1e-6)?
                .into_iter()
                .next()
                .map(|p| p.x)
                .ok_or_else(|| Error::Config("no spurious point found to center the sweep on".into()))?
        }
    };
    let grids = specs
        .iter()
        .map(|spec| {
            landscape::landscape_sweep(&inst, &center, &inst.xstar, half_width, grid_points, spec, cfg.seed())
                .map_err(|e| match e {
                    Error::InvalidParameter(m) => Error::Config(m),
                    other => other,
                })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LandscapeResult { center, lambdas: specs.iter().map(|s| s.lambda()).collect(), grids })
}
