//! Simulation and optimization toolkit for continuously observed open quantum
//! systems.
//!
//! The crate covers three layers that build on each other:
//!
//! * **States and generators** — dense complex matrix algebra
//!   ([`operators`]), the quantum Itô ⋆-algebra of germ matrices ([`ito`]),
//!   and deterministic Lindblad evolution ([`master`]).
//! * **Trajectories** — diffusive and counting quantum filters driven by
//!   simulated measurement records ([`filtering`]), with reproducible
//!   counter-based randomness ([`rng`]).
//! * **Optimal control** — the Gaussian LQG layer (Kalman filter, filtering
//!   and control Riccati equations, optimal gains, minimal cost, and the
//!   filtering↔control duality map) in [`lqg`], plus Bellman/HJB verification
//!   utilities in [`bellman`].
//!
//! Everything is desk-scale: dense matrices up to dimension 64, pure
//! functions, and bit-reproducible stochastic simulation.

pub mod bellman;
pub mod filtering;
pub mod io;
pub mod ito;
pub mod linalg;
pub mod lqg;
pub mod master;
pub mod operators;
pub mod rng;
pub mod sample;

pub use linalg::{CMatrix, RMatrix};
pub use operators::{CouplingSet, DensityMatrix, OperatorError};
