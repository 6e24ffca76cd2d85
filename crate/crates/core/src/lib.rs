//! Simultaneous recovery of a Robin (impedance) coefficient on the boundary and
//! a conductivity in the interior of a domain, from noisy potential data
//! measured in a thin layer next to the boundary.
//!
//! The reconstruction runs in two steps:
//!
//! 1. the normal derivative of the potential on the boundary is estimated by
//!    mollifying the layer data, and the Robin coefficient follows from the
//!    boundary condition ([`regularization`]);
//! 2. the potential is written as a volume plus single-layer potential with an
//!    unknown density pair, whose volume integrals are reduced to boundary
//!    integrals by the dual reciprocity and radial integration methods
//!    ([`levi_operators`]). The density pair is found from a Tikhonov
//!    regularized system, and the conductivity from the first-order transport
//!    equation it induces ([`conductivity`]).
//!
//! [`experiments`] holds the manufactured test cases and the end-to-end
//! pipeline, [`config`] the run configuration, [`report`] the output
//! formats and [`verify`] the oracle and invariant suites.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conductivity;
pub mod config;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod kernels;
pub mod levi_operators;
pub mod linalg;
pub mod quadrature;
pub mod regularization;
pub mod report;
pub mod verify;

pub use error::{Error, Result};

/// A point in the ambient space of dimension `D` (2 or 3).
pub type Point<const D: usize> = nalgebra::SVector<f64, D>;
