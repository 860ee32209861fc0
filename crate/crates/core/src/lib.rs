//! Compressible Navier–Stokes with singular pressure and density-dependent
//! singular viscosities on the periodic square, with diagnostics for the
//! congested (maximal packing) limit.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` deliberately rejects NaN

pub mod checks;
pub mod config;
pub mod constitutive;
pub mod diagnostics;
pub mod error;
pub mod fields;
pub mod io;
pub mod limits;
pub mod quadrature;
pub mod solver;

pub use error::{Error, Result};
