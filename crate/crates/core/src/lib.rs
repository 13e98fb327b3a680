//! Matrix sensing in Burer–Monteiro form with high-order penalty losses.
//!
//! The crate is organised bottom-up:
//!
//! * [`operators`] builds sensing operators `A(·)` and problem instances, and
//!   estimates restricted-isometry constants by sampling.
//! * [`losses`] evaluates `f`, `f^l`, `f_λ^l = f + λ f^l`, the lifted losses
//!   `h^l`, their gradients, Hessian forms and higher directional derivatives.
//! * [`landscape`] classifies critical points from the Hessian spectrum, checks
//!   the strict-saddle criteria and bounds, builds escape directions and runs
//!   2-D curvature sweeps.
//! * [`optimizer`] runs (perturbed) gradient descent and multi-start searches
//!   for spurious second-order points.
//! * [`experiments`] is the configuration-driven harness behind the CLI.
//!
//! Matrices are `nalgebra::DMatrix<f64>`. A factor `X` is `n × r`; whenever an
//! `n × r` matrix is flattened it is in column-major order (`vec(U)`), so the
//! Hessian index of entry `(p, k)` is `k * n + p`.

pub mod error;
pub mod experiments;
pub mod landscape;
pub mod linalg;
pub mod losses;
pub mod operators;
pub mod optimizer;

pub use error::{Error, Result};
pub use landscape::{
    classify_point, escape_direction, global_benign_condition, landscape_sweep,
    lifted_region_threshold, near_region_radius, thm1_check, thm4_check, Classification,
    CriticalPointReport, TheoremVerdict,
};
pub use losses::{LossSpec, TaylorCoefficient};
pub use operators::{make_epsilon_operator, make_gaussian_operator, make_instance, ProblemInstance, SensingOperator};
pub use optimizer::{distance_to_truth, gradient_descent, perturbed_gd, PgdConfig, Trajectory};
