//! Experiment configuration: one TOML file, every key optional, unknown keys rejected.
//!
//! ```toml
//! experiment = "table1"          # must match the subcommand when given
//! seed = 7                       # base seed for everything not seeded below
//!
//! [operator]
//! kind = "epsilon_mask"          # epsilon_mask | gaussian | isometry | file
//! n = 21
//! epsilon = 0.1
//! m = 20                         # gaussian only
//! seed = 1                       # gaussian only (defaults to the base seed)
//! path = "op.toml"               # file only
//! delta = 0.818                  # RIP constant handed to the theorem checks
//!
//! [ground_truth]
//! kind = "odd_indicator"         # odd_indicator | random
//! rank = 1                       # random only
//! scale = 1.0                    # random only: ‖X*‖_F
//!
//! [rank]
//! r = 1
//!
//! [loss]
//! order = 4
//! lambdas = [0.0, 0.5, 5.0, 50.0]
//!
//! [optimizer]                    # any PgdConfig field except seed
//! step_factor = 0.05
//! max_iters = 100000
//! ```
//!
//! plus one table per experiment (`[table1]`, `[pgd_compare]`, `[landscape]`,
//! `[audit]`, `[rip]`) described on the corresponding structs.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::losses::{check_order, LossSpec};
use crate::operators::{self, SensingOperator};
use crate::optimizer::PgdConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Table1,
    Ratio,
    PgdCompare,
    Landscape,
    TheoremAudit,
    RipEstimate,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Table1 => "table1",
            ExperimentKind::Ratio => "ratio",
            ExperimentKind::PgdCompare => "pgd_compare",
            ExperimentKind::Landscape => "landscape",
            ExperimentKind::TheoremAudit => "theorem_audit",
            ExperimentKind::RipEstimate => "rip_estimate",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<ExperimentKind>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub operator: OperatorConfig,
    #[serde(default)]
    pub ground_truth: GroundTruthConfig,
    #[serde(default)]
    pub rank: RankConfig,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub table1: Table1Config,
    #[serde(default)]
    pub pgd_compare: PgdCompareConfig,
    #[serde(default)]
    pub landscape: LandscapeConfig,
    #[serde(default)]
    pub audit: AuditConfig,
    #[serde(default)]
    pub rip: RipConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKindConfig {
    EpsilonMask,
    Gaussian,
    Isometry,
    File,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    pub kind: Option<OperatorKindConfig>,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
    pub path: Option<PathBuf>,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundTruthKind {
    OddIndicator,
    Random,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthConfig {
    pub kind: Option<GroundTruthKind>,
    pub rank: Option<usize>,
    pub scale: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankConfig {
    pub r: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub order: Option<u32>,
    pub lambdas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub step: Option<f64>,
    pub step_factor: Option<f64>,
    pub max_iters: Option<usize>,
    pub grad_trigger: Option<f64>,
    pub perturb_radius: Option<f64>,
    pub init_scale: Option<f64>,
    pub converge_tol: Option<f64>,
    pub stationary_tol: Option<f64>,
    pub record_every: Option<usize>,
}

/// `[table1]`: sizes to sweep and the multi-start budget.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table1Config {
    pub n_values: Option<Vec<usize>>,
    pub n_starts: Option<usize>,
    pub grad_tol: Option<f64>,
    pub eig_tol: Option<f64>,
}

/// `[pgd_compare]`: seeds and the distance counted as "reached".
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PgdCompareConfig {
    pub n_seeds: Option<usize>,
    pub distance_tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepCenter {
    /// `X̂ = 0`, a critical point for every λ.
    Zero,
    /// The first spurious second-order point found at the first λ.
    Spurious,
}

/// `[landscape]`: lattice around the chosen critical point.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeConfig {
    pub center: Option<SweepCenter>,
    pub half_width: Option<f64>,
    pub grid_points: Option<usize>,
}

/// `[audit]`: the penalty orders and weights each point is checked under.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    pub orders: Option<Vec<u32>>,
    pub lambdas: Option<Vec<f64>>,
    pub grad_tol: Option<f64>,
}

/// `[rip]`: rank of the sampled matrices and sample count.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RipConfig {
    pub p: Option<usize>,
    pub samples: Option<usize>,
}

fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

impl ExperimentConfig {
    /// Parses and validates every field that is present, whether or not the
    /// experiment it is run with reads it.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.order()?;
        if let Some(list) = &self.loss.lambdas {
            if list.is_empty() {
                return config_err("loss.lambdas must not be empty");
            }
            for &lam in list {
                LossSpec::new(l, lam).map_err(|e| Error::Config(e.to_string()))?;
            }
        }
        self.pgd_config(PgdConfig::default())?;
        if self.rank.r == Some(0) {
            return config_err("rank.r must be ≥ 1");
        }
        if let Some(d) = self.operator.delta {
            if !(0.0..1.0).contains(&d) {
                return config_err(format!("operator.delta must lie in [0, 1), got {d}"));
            }
        }
        if self.operator.n == Some(0) || self.operator.m == Some(0) {
            return config_err("operator.n and operator.m must be ≥ 1");
        }
        if self.ground_truth.rank == Some(0) || self.ground_truth.scale.is_some_and(|s| !(s > 0.0)) {
            return config_err("ground_truth.rank must be ≥ 1 and scale > 0");
        }
        let t = &self.table1;
        if t.n_values.as_ref().is_some_and(|v| v.is_empty() || v.contains(&0)) || t.n_starts == Some(0) {
            return config_err("table1.n_values must be non-empty and positive, n_starts ≥ 1");
        }
        if [t.grad_tol, t.eig_tol, self.audit.grad_tol].iter().flatten().any(|&v| !(v > 0.0)) {
            return config_err("tolerances must be positive");
        }
        let p = &self.pgd_compare;
        if p.n_seeds == Some(0) || p.distance_tol.is_some_and(|v| !(v > 0.0)) {
            return config_err("pgd_compare.n_seeds must be ≥ 1 and distance_tol > 0");
        }
        let g = &self.landscape;
        if g.grid_points.is_some_and(|k| k % 2 == 0) || g.half_width.is_some_and(|h| !(h > 0.0 && h.is_finite())) {
            return config_err("landscape.grid_points must be odd and half_width positive");
        }
        if let Some(orders) = &self.audit.orders {
            if orders.is_empty() {
                return config_err("audit.orders must not be empty");
            }
            for &o in orders {
                check_order(o).map_err(|e| Error::Config(e.to_string()))?;
            }
        }
        if self.audit.lambdas.as_ref().is_some_and(|v| v.is_empty() || v.iter().any(|&x| !(x >= 0.0))) {
            return config_err("audit.lambdas must be non-empty and ≥ 0");
        }
        if self.rip.p == Some(0) || self.rip.samples.is_some_and(|k| k < 2) {
            return config_err("rip.p must be ≥ 1 and rip.samples ≥ 2");
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Rejects a file written for a different experiment.
    pub fn expect_kind(&self, kind: ExperimentKind) -> Result<()> {
        match self.experiment {
            Some(k) if k != kind => config_err(format!(
                "config is for experiment '{}', not '{}'",
                k.as_str(),
                kind.as_str()
            )),
            _ => Ok(()),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn search_rank(&self) -> usize {
        self.rank.r.unwrap_or(1)
    }

    pub fn order(&self) -> Result<u32> {
        let l = self.loss.order.unwrap_or(4);
        check_order(l).map_err(|e| Error::Config(e.to_string()))?;
        Ok(l)
    }

    pub fn lambdas(&self, default: &[f64]) -> Result<Vec<f64>> {
        let list = self.loss.lambdas.clone().unwrap_or_else(|| default.to_vec());
        if list.is_empty() {
            return config_err("loss.lambdas must not be empty");
        }
        Ok(list)
    }

    /// One [`LossSpec`] per configured λ.
    pub fn loss_specs(&self, default_lambdas: &[f64]) -> Result<Vec<LossSpec>> {
        let l = self.order()?;
        self.lambdas(default_lambdas)?
            .into_iter()
            .map(|lam| LossSpec::new(l, lam).map_err(|e| Error::Config(e.to_string())))
            .collect()
    }

    /// Optimizer settings over `base`, seeded with the base seed.
    pub fn pgd_config(&self, base: PgdConfig) -> Result<PgdConfig> {
        let o = &self.optimizer;
        let cfg = PgdConfig {
            step: o.step.or(base.step),
            step_factor: o.step_factor.unwrap_or(base.step_factor),
            max_iters: o.max_iters.unwrap_or(base.max_iters),
            grad_trigger: o.grad_trigger.unwrap_or(base.grad_trigger),
            perturb_radius: o.perturb_radius.unwrap_or(base.perturb_radius),
            init_scale: o.init_scale.unwrap_or(base.init_scale),
            seed: self.seed(),
            converge_tol: o.converge_tol.unwrap_or(base.converge_tol),
            stationary_tol: o.stationary_tol.or(base.stationary_tol),
            record_every: o.record_every.unwrap_or(base.record_every),
        };
        cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Builds the configured operator with side length `n` (overriding
    /// `operator.n` when given).
    pub fn build_operator(&self, default_kind: OperatorKindConfig, n: Option<usize>) -> Result<SensingOperator> {
        let o = &self.operator;
        let kind = o.kind.unwrap_or(default_kind);
        let n = n.or(o.n);
        let need_n = || n.ok_or_else(|| Error::Config("operator.n is required".into()));
        let op = match kind {
            OperatorKindConfig::EpsilonMask => {
                let eps = o.epsilon.ok_or_else(|| Error::Config("operator.epsilon is required".into()))?;
                operators::make_epsilon_operator(need_n()?, eps)
            }
            OperatorKindConfig::Gaussian => {
                let n = need_n()?;
                operators::make_gaussian_operator(n, o.m.unwrap_or(n), o.seed.unwrap_or(self.seed()))
            }
            OperatorKindConfig::Isometry => operators::isometry_operator(need_n()?),
            OperatorKindConfig::File => {
                let path = o.path.as_ref().ok_or_else(|| Error::Config("operator.path is required".into()))?;
                let op = SensingOperator::load(path)?;
                if n.is_some_and(|n| n != op.n()) {
                    return config_err(format!("operator file has n = {}, config asks for {}", op.n(), n.unwrap()));
                }
                Ok(op)
            }
        };
        op.map_err(|e| match e {
            Error::Io(_) => e,
            other => Error::Config(other.to_string()),
        })
    }

    /// RIP constant for the theorem checks: `operator.delta`, else the
    /// operator's certified constant, else its claimed one.
    pub fn delta_for(&self, op: &SensingOperator) -> Result<f64> {
        let delta = self
            .operator
            .delta
            .or(op.certified_delta())
            .or(op.claimed_delta())
            .ok_or_else(|| Error::Config("operator.delta is required for this operator".into()))?;
        if !(0.0..1.0).contains(&delta) {
            return config_err(format!("operator.delta must lie in [0, 1), got {delta}"));
        }
        Ok(delta)
    }

    /// Ground-truth factor for side length `n`.
    pub fn ground_truth(&self, n: usize) -> Result<nalgebra::DMatrix<f64>> {
        let g = &self.ground_truth;
        match g.kind.unwrap_or(GroundTruthKind::OddIndicator) {
            GroundTruthKind::OddIndicator => Ok(operators::odd_index_indicator(n)),
            GroundTruthKind::Random => {
                let rank = g.rank.unwrap_or(1);
                let scale = g.scale.unwrap_or(1.0);
                if rank == 0 || rank > n || !(scale > 0.0) {
                    return config_err("ground_truth.rank must be in 1..=n and scale > 0");
                }
                // separate stream from the operator and the initializations
                let seed = g.seed.unwrap_or(self.seed().wrapping_add(0x9e37_79b9));
                Ok(operators::random_factor(n, rank, scale, seed))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_defaults() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg.order().unwrap(), 4);
        assert_eq!(cfg.lambdas(&[0.0, 5.0]).unwrap(), vec![0.0, 5.0]);
        assert_eq!(cfg.search_rank(), 1);
    }

    #[test]
    fn unknown_and_invalid_keys_rejected() {
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
        assert!(ExperimentConfig::from_toml("[loss]\nordre = 4").is_err());
        assert!(matches!(ExperimentConfig::from_toml("[loss]\norder = 3"), Err(Error::Config(_))));
        assert!(ExperimentConfig::from_toml("[loss]\nlambdas = []").is_err());
        assert!(ExperimentConfig::from_toml("[loss]\nlambdas = [-1.0]").is_err());
        assert!(ExperimentConfig::from_toml("[landscape]\ngrid_points = 4").is_err());
        assert!(ExperimentConfig::from_toml("[optimizer]\nmax_iters = 0").is_err());
        let cfg = ExperimentConfig::from_toml("[operator]\nkind = \"epsilon_mask\"\nn = 3\nepsilon = 1.5").unwrap();
        assert!(matches!(cfg.build_operator(OperatorKindConfig::EpsilonMask, None), Err(Error::Config(_))));
    }

    #[test]
    fn experiment_kind_must_match() {
        let cfg = ExperimentConfig::from_toml("experiment = \"table1\"").unwrap();
        assert!(cfg.expect_kind(ExperimentKind::Table1).is_ok());
        assert!(cfg.expect_kind(ExperimentKind::Landscape).is_err());
    }

    #[test]
    fn optimizer_overrides() {
        let cfg = ExperimentConfig::from_toml("seed = 9\n[optimizer]\nmax_iters = 5\nstep = 0.01").unwrap();
        let p = cfg.pgd_config(PgdConfig::default()).unwrap();
        assert_eq!((p.max_iters, p.step, p.seed), (5, Some(0.01), 9));
        assert!(ExperimentConfig::from_toml("[optimizer]\nmax_iters = 0").is_err());
    }
}
