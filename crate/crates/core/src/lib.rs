//! Simulator for continuous-variable quantum teleportation whose entangled
//! resource propagates through a non-Markovian channel modeled as an
//! augmented (principal + ancilla) open quantum system.
//!
//! Module map:
//! - [`fock`]: truncated Fock-space linear algebra;
//! - [`master`]: Liouvillian superoperators, matrix-exponential propagation,
//!   and the reduced channel map of mode B;
//! - [`channels`]: Lorentzian / two-Lorentzian augmented channel models and
//!   their Markovian references;
//! - [`metrics`]: logarithmic negativity, trace distance, BLP quantifier;
//! - [`teleport`]: Bell projection, reconstruction, average fidelity, Wigner
//!   functions, and the end-to-end teleportation pipeline;
//! - [`cli`]: config-driven experiment runner with CSV output.

pub mod channels;
pub mod cli;
pub mod fock;
pub mod master;
pub mod metrics;
pub mod teleport;
