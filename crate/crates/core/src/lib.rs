//! Equal-order stabilized finite elements for Stokes, Oseen and stationary
//! Navier-Stokes problems on triangles, with numerical checks of mapped
//! coercivity.
// Element kernels index several parallel arrays; `!(x > 0.0)` also rejects NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
#[cfg(feature = "cli")]
pub mod cli;
pub mod coercivity;
pub mod error;
pub mod fe_space;
pub mod harness;
pub mod linalg;
pub mod mesh;
pub mod quadrature;
pub mod solver;
pub mod sparse;
pub mod stabilization;

pub use error::{Error, Result};
