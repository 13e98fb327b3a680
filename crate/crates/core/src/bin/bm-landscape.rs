use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bm_landscape::experiments::{
    self, run_landscape, run_pgd_compare, run_ratio, run_rip_estimate, run_table1, run_theorem_audit,
    ExperimentConfig, OutputFile,
};
use bm_landscape::Error;

/// Matrix-sensing landscape experiments. Each subcommand reads an optional
/// TOML config and writes its CSV/JSON files into the output directory.
#[derive(Parser)]
#[command(name = "bm-landscape", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the config's base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Hessian spectra at spurious minima and at the ground truth.
    Table1,
    /// λ_max/λ_min at the spurious minima of `table1`.
    Ratio,
    /// Perturbed gradient descent with and without the penalty.
    PgdCompare,
    /// Minimum-eigenvalue grids around a critical point.
    Landscape,
    /// Strict-saddle criteria checked on generated critical points.
    TheoremAudit,
    /// Sampled restricted-isometry constant.
    RipEstimate,
}

const EXIT_CONFIG: u8 = 1;
const EXIT_INCONSISTENT: u8 = 2;

fn run(cli: &Cli) -> Result<(Vec<OutputFile>, bool), Error> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    let mut consistent = true;
    let files = match cli.command {
        Command::Table1 => run_table1(&cfg)?.files(),
        Command::Ratio => {
            let r = run_ratio(&cfg)?;
            for w in &r.warnings {
                eprintln!("warning: {w}");
            }
            r.files()
        }
        Command::PgdCompare => run_pgd_compare(&cfg)?.files(),
        Command::Landscape => run_landscape(&cfg)?.files(),
        Command::TheoremAudit => {
            let a = run_theorem_audit(&cfg)?;
            let bad = a.inconsistent();
            eprintln!(
                "audited {} points, {} rows, {} inconsistent, {} escape failures",
                a.points_audited,
                a.rows.len(),
                bad.len(),
                a.escape_failures().len()
            );
            for r in &bad {
                eprintln!(
                    "inconsistent: {} (bound {}, lambda_min {})",
                    r.point_id, r.verdict.predicted_bound, r.verdict.observed_lambda_min
                );
            }
            consistent = bad.is_empty();
            a.files()
        }
        Command::RipEstimate => run_rip_estimate(&cfg)?.files(),
    };
    Ok((files, consistent))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok((files, consistent)) => {
            if let Err(e) = experiments::write_outputs(&cli.out, &files) {
                eprintln!("error: {e}");
                return ExitCode::FAILURE;
            }
            if consistent {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_INCONSISTENT)
            }
        }
        Err(e @ (Error::Config(_) | Error::Parse(_))) => {
            eprintln!("invalid config: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
