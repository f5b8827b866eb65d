//! Probabilistic hysteresis in the driven two-site Bose-Hubbard model.
//!
//! The crate computes the same return probability three ways: exact propagation of
//! the many-body state, an incoherent cascade of Landau-Zener transitions through the
//! avoided crossings of the adiabatic spectrum, and mean-field ensembles crossing a
//! separatrix (with Kruskal's quasi-static limit).

pub mod error;
pub mod experiment;
pub mod ica;
pub mod model;
pub mod propagation;
pub mod semiclassics;
pub mod spectral;
pub mod tridiag;

pub use error::{Error, Result};
pub use model::{build_hamiltonian, Leg, ModelParams, SweepProtocol, TridiagonalHamiltonian};
