//! Numerical core for mean-field games of coupled phase oscillators.
//!
//! The crate is `no_std` (it needs `alloc`) and covers four areas:
//!
//! * [`model`]: controlled Kuramoto-type populations, Euler–Maruyama
//!   simulation, order parameters and empirical game costs.
//! * [`spectral`] and [`linearized`]: spectra of the linearized mean-field
//!   game around the incoherence solution, eigenvalue continuation in the
//!   control penalty and the critical threshold `R_c(γ)`.
//! * [`learning`]: first-harmonic approximate dynamic programming, Galerkin
//!   relaxation of the Bellman error and the finite-population learning ODE.
//! * [`fpf`]: the coupled-oscillator feedback particle filter with a
//!   two-function Galerkin gain.
//!
//! [`oracles`] holds independent brute-force references (a grid
//! Kushner–Stratonovich filter, a grid Poisson gain solver and an adaptive
//! quadrature for the characteristic integral) used to cross-check the above.
#![no_std]
// `num_traits::Float` supplies the math methods of `f64`; it goes unused
// whenever std is also in the dependency graph.
#![allow(unused_imports)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod fpf;
pub mod learning;
pub mod linearized;
pub mod model;
pub mod oracles;
pub mod quadrature;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// 2π.
pub const TAU: f64 = core::f64::consts::TAU;
