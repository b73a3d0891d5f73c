//! Discrete p-Laplacian energies with sign-changing weight, their weighted
//! nonlinear eigenvalues, and minimax search for nontrivial critical points.
//!
//! The numerics are generic over the scalar type ([`Real`], implemented for
//! `f32` and `f64`); the `*64` aliases below name the usual instantiations.

// negated comparisons below are deliberate: they reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod eigen;
pub mod error;
pub mod expr;
pub mod fconditions;
pub mod field;
pub mod functional;
pub mod grid;
pub mod linalg;
pub mod minimax;
pub mod problem;
pub mod rng;
pub mod scalar;
pub mod suites;

pub use error::{Error, Result};
pub use field::Field;
pub use functional::{
    cerami_residual, cone_membership, eval_energy, grad_energy, monotonicity_gap, ConePosition,
    EnergyBreakdown, Gradients,
};
pub use grid::{forward_difference, DomainDescriptor, Flux, Grid, GridKind};
pub use problem::{NonlinearitySpec, ProblemDescriptor, ProblemSpec};
pub use scalar::Real;

pub type Grid64 = Grid<f64>;
pub type Field64 = Field<f64>;
pub type ProblemSpec64 = ProblemSpec<f64>;
pub type EigenPair64 = eigen::EigenPair<f64>;
pub type SpectrumEstimate64 = eigen::SpectrumEstimate<f64>;
pub type LinkingGeometry64 = minimax::LinkingGeometry<f64>;
pub type CriticalPointResult64 = minimax::CriticalPointResult<f64>;

pub type Grid32 = Grid<f32>;
pub type Field32 = Field<f32>;
pub type ProblemSpec32 = ProblemSpec<f32>;
