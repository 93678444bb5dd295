//! Linear energy-quadratized Runge-Kutta schemes for gradient-flow PDEs
//! (Cahn-Hilliard, molecular-beam epitaxy) on periodic Fourier grids.

pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod integrators;
pub mod models;
pub mod spectral;
pub mod tableau;

pub use error::{Error, Result};
