//! Momentum-space solver for the Bogoliubov–Dirac–Fock mean-field model of
//! graphene with a sharp ultraviolet cutoff.
//!
//! States are density matrices γ (orthogonal projectors) on a uniform
//! momentum grid inside the disk |p| ≤ Λ, written as γ = P⁰₋ + Q with P⁰₋ the
//! free Dirac sea. The crate provides the free operators, the BDF energy and
//! mean-field operator, a self-consistent ground-state solver, a unitary
//! time integrator and an estimator for the critical Fermi velocity.

pub mod checkpoint;
pub mod critical;
pub mod dynamics;
pub mod energy;
pub mod error;
pub mod free;
pub mod grid;
pub mod invariants;
pub mod linalg;
pub mod mean_field;
pub mod model;
pub mod quadrature;
pub mod radial;
pub mod scf;
pub mod state;

pub use error::{BdfError, Result};
pub use grid::{DifferenceLattice, GridSpec, MomentumGrid};
pub use model::Model;
pub use state::{ChargeDensity, OperatorKernel};
