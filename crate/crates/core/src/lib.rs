//! Magnetic Schrödinger operators: field geometry, classical charged-particle
//! dynamics and the semiclassical spectral quantities built on top of them.
//!
//! The crate is organised bottom-up:
//!
//! * [`quadrature`], [`roots`], [`ode`], [`expr`] are numerical plumbing.
//! * [`field`] builds magnetic two-forms, their intensities, rank strata and
//!   magnetic lines.
//! * [`dynamics`] integrates the classical flow, drift equations and the
//!   degenerate model (effective potential, period, drift increment, `k*`).
//! * [`weyl`] evaluates the magnetic Weyl density and Landau-level density.
//! * [`correction`] computes eigenvalue counts of the auxiliary 1D operator,
//!   the universal function `G` and the short-periodic-orbit correction.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod correction;
pub mod dynamics;
pub mod expr;
pub mod field;
pub mod ode;
pub mod quadrature;
pub mod roots;
pub mod stats;
pub mod weyl;

mod error;

pub use error::{Error, Result};
