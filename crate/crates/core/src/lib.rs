//! Variational time evolution of driven-dissipative Rydberg spin lattices.
//!
//! The crate is organised bottom-up:
//!
//! - [`qops`]: dense multi-qubit operator algebra (Pauli matrices, tensor
//!   products, partial traces, Hermitian eigensolver, trace norm).
//! - [`model`]: lattice geometry, the Rydberg Hamiltonian and the Lindblad
//!   generator on site clusters, including coupling to exterior sites.
//! - [`exact`]: dense implicit-midpoint evolution and quantum trajectories.
//! - [`variational`]: product and nearest-neighbour-correlated variational
//!   integration by trace-norm minimization.
//! - [`nonmarkov`]: reconstruction of the time-local two-site generator,
//!   canonical decay rates, non-Markovianity and mutual-information measures.
//! - [`cli`]: configuration, runs, sweeps and comparisons for the binary.

pub mod cli;
pub mod error;
pub mod exact;
pub mod model;
pub mod nonmarkov;
pub mod optim;
pub mod qops;
pub mod series;
pub mod variational;

pub use error::{Error, Result};
