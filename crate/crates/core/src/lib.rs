//! Collocation time-stepping for time-fractional subdiffusion equations.

pub mod bench;
pub mod colloc;
pub mod eigen;
pub mod error;
pub mod fem;
pub mod field;
pub mod frac;
pub mod quadrature;
pub mod selftest;
pub mod special;
pub mod spectral;
pub mod stepper;

pub use error::{Error, Result};
