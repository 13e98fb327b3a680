//! Configuration-driven experiments behind the `bm-landscape` CLI.
//!
//! Every runner is a pure function of its [`ExperimentConfig`]: it returns the
//! rows it computed plus the exact file contents to write, so repeated runs
//! with the same config and seed produce byte-identical output.

use std::path::Path;

use crate::error::Result;

mod audit;
pub mod config;
mod pgd;
mod rip;
mod sweep;
mod table1;

pub use audit::{run_theorem_audit, AuditResult, AuditRow};
pub use config::{ExperimentConfig, ExperimentKind};
pub use pgd::{run_pgd_compare, PgdCompareResult, PgdRun};
pub use rip::{run_rip_estimate, RipResult};
pub use sweep::{run_landscape, LandscapeResult};
pub use table1::{run_ratio, run_table1, RatioResult, SpuriousSpectrum, Table1Result, Table1Row};

/// Marker written in place of numbers when no spurious point was found.
pub const NOT_FOUND: &str = "NOT_FOUND";

/// A named output file and its full contents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFile {
    pub name: String,
    pub contents: String,
}

impl OutputFile {
    fn new(name: impl Into<String>, contents: String) -> Self {
        Self { name: name.into(), contents }
    }
}

/// Writes each file into `dir`, creating the directory if needed.
pub fn write_outputs(dir: impl AsRef<Path>, files: &[OutputFile]) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    for f in files {
        std::fs::write(dir.join(&f.name), &f.contents)?;
    }
    Ok(())
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> String {
    let mut buf = Vec::new();
    write(&mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("CSV output is ASCII")
}
