//! Magnetic discrete-time quantum walks on the square lattice.
//!
//! The walk applies `W = F S_y C S_x C` every step: a Hadamard-like coin, spin-dependent
//! shifts along x and y, and a spin-dependent Peierls phase that encodes a uniform or
//! spatially varying artificial magnetic field. The crate builds these unitaries in
//! real space and in Bloch form, computes quasienergy spectra and topological invariants,
//! evolves wave packets, and models Floquet phase imprinting with finite optical resolution.

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod operators;
pub mod realism;
pub mod spectra;
pub mod symmetry;
pub mod topology;

pub use error::{Result, WalkError};
pub use num_complex::Complex64 as C64;

/// Dense complex matrix used for Bloch operators.
pub type CMatrix = nalgebra::DMatrix<C64>;
