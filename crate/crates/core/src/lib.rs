//! Numerical laboratory for positive periodic and subharmonic solutions of
//! `u'' + (a⁺(t) − μ a⁻(t)) g(u) = 0`.

pub mod combinatorics;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod nonlinearity;
pub mod oscillation;
pub mod periodic;
pub mod quadrature;
pub mod spectral;
pub mod weights;

pub use error::{Error, Result};
