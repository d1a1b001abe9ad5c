//! Finite element schemes for the compressible barotropic semi-stationary
//! Stokes system and the Stokes approximation equations on 2D triangulations.

// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli_io;
pub mod diagnostics;
pub mod eos;
pub mod error;
pub mod fespace;
pub mod fields;
pub mod linalg;
pub mod mesh;
pub mod momentum_cr;
pub mod momentum_mixed;
pub mod par;
pub mod quadrature;
pub mod solver;
pub mod transport;

pub use error::{Error, Result};
