//! hp-adaptive reconstruction of band functions over a triangular parameter
//! domain.
//!
//! The pipeline has three stages:
//!
//! 1. [`adapt`] refines a triangulation of the parameter triangle wherever two
//!    adjacent bands come close (newest-vertex bisection with closure, see
//!    [`mesh`]), and assigns each element a polynomial degree that grows with
//!    the number of loops the element survived unrefined.
//! 2. [`interp`] builds a continuous piecewise polynomial interpolant of each
//!    eigenvalue surface, element by element, on the reference triangle
//!    described in [`refbasis`], using Gauss-Lobatto nodes on faces and
//!    determinant-maximising interior nodes from [`fekete`].
//! 3. [`harness`] measures the result against a reference grid.
//!
//! Band values come from a [`bands::BandProvider`]: closed-form matrix
//! families with known crossings, or a P1 finite element Bloch eigensolver.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapt;
pub mod bands;
pub mod config;
pub mod error;
pub mod fekete;
pub mod harness;
pub mod interp;
pub mod mesh;
pub mod refbasis;

pub use error::{Error, Result};
pub use mesh::{ParamMesh, WaveVector};

/// Highest element degree supported by the interior node tables.
pub const MAX_DEGREE: usize = 10;
