use super::config::{ExperimentConfig, ExperimentKind, OperatorKindConfig};
use super::OutputFile;
use crate::error::{Error, Result};
use crate::linalg::fmt_f64;
use crate::operators::{estimate_rip_constant, RipEstimate};

#[derive(Debug, Clone, PartialEq)]
pub struct RipResult {
    pub estimate: RipEstimate,
    pub claimed_delta: Option<f64>,
    pub p: usize,
    pub samples: usize,
    pub seed: u64,
}

impl RipResult {
    /// Flat JSON object; `claimed_delta` is `null` when the operator has none.
    pub fn to_json(&self) -> String {
        let claimed = self.claimed_delta.map_or_else(|| "null".to_string(), fmt_f64);
        format!(
            "{{\"delta_hat\": {}, \"scale_hat\": {}, \"claimed_delta\": {}, \"rho_min\": {}, \"rho_max\": {}, \"p\": {}, \"samples\": {}, \"seed\": {}}}\n",
            fmt_f64(self.estimate.delta_hat),
            fmt_f64(self.estimate.scale_hat),
            claimed,
            fmt_f64(self.estimate.rho_min),
            fmt_f64(self.estimate.rho_max),
            self.p,
            self.samples,
            self.seed
        )
    }

    pub fn files(&self) -> Vec<OutputFile> {
        vec![OutputFile::new("rip_estimate.json", self.to_json())]
    }
}

/// Defaults: ε-mask `n = 6`, `ε = 0.3`, `p = 2`, 10⁴ samples.
pub fn run_rip_estimate(cfg: &ExperimentConfig) -> Result<RipResult> {
    cfg.expect_kind(ExperimentKind::RipEstimate)?;
    let mut cfg = cfg.clone();
    cfg.operator.n.get_or_insert(6);
    cfg.operator.epsilon.get_or_insert(0.3);
    let op = cfg.build_operator(OperatorKindConfig::EpsilonMask, None)?;
    let p = cfg.rip.p.unwrap_or(2);
    let samples = cfg.rip.samples.unwrap_or(10_000);
    let estimate = estimate_rip_constant(&op, p, samples, cfg.seed()).map_err(|e| Error::Config(e.to_string()))?;
    Ok(RipResult { estimate, claimed_delta: op.claimed_delta(), p, samples, seed: cfg.seed() })
}
