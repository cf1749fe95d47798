//! Numerical laboratory for transfer operators of expanding circle maps with
//! additive kernel noise: stationary densities, zero-noise limits, response
//! coefficients, and the corresponding abstract finite-state checks.

pub mod abstract_response;
pub mod config;
pub mod error;
pub mod expr;
pub mod fftutil;
pub mod grid;
pub mod kernels;
pub mod maps;
pub mod montecarlo;
pub mod operators;
pub mod quadrature;
pub mod report;
pub mod response;
pub mod solver;

pub use error::{Error, Result};
