//! Unfitted (cut) mixed finite element methods for the Darcy interface problem.
//!
//! The crate discretizes Darcy flow on a structured background triangulation that
//! does not conform to the interface. Velocities live in H(div)-conforming spaces
//! (RT0, BDM1, RT1) on two overlapping active meshes, pressures in discontinuous
//! P0/P1. Three schemes are provided:
//!
//! * the unstabilized scheme,
//! * standard ghost penalty stabilization of velocity and pressure (`Method1`),
//! * ghost penalty on the velocity plus a mixed divergence/pressure penalty that
//!   keeps solenoidal fields pointwise divergence free (`Method2`).
//!
//! Stabilization may act on all faces of cut elements or only on the interior faces
//! of macro-elements. The [`bench`] module contains the manufactured benchmark
//! problems and the refinement/sweep harness used by the command line driver.

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregation;
pub mod bench;
pub mod cli;
pub mod error;
pub mod forms;
pub mod geometry;
pub mod linalg;
pub mod mesh;
pub mod poly;
pub mod quadrature;
pub mod spaces;

pub use error::{Error, Result};

/// A point or vector in the plane.
pub type Point = [f64; 2];
