//! Airfoil pressure-matching toolkit: CST geometry, elliptic O-grids,
//! conservative full-potential flow with AF2 relaxation, coupled discrete
//! adjoints, error bounds for inexact gradients and descent with inexact
//! directions.

pub mod adjoint;
pub mod bounds;
pub mod cli;
pub mod config;
pub mod descent;
pub mod error;
pub mod field;
pub mod flow;
pub mod geometry;
pub mod linsolve;
pub mod meshgen;
pub mod pipeline;
pub mod real;

pub use error::{Error, Result};
pub use field::Field2;
pub use real::{Dual, Real};
