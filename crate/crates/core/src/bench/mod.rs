//! Benchmark problems, error norms and refinement/interface studies.

mod problem;
mod study;

pub use problem::{Example, ProblemSpec, CENTER, EXAMPLE1_RADIUS, EXAMPLE2_RADIUS};
pub use study::{
    compute_errors, eoc, fit_slope, interface_sweep, refinement_study, run_single, run_single_with,
    sweep_shifts, Case, ConditionMode, ErrorMetrics, ErrorReport, Solved,
};
