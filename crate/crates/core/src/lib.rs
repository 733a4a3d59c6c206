//! Stochastic flux-noise simulation for frequency-tunable transmon qubits.
//!
//! The crate is organised bottom-up:
//!
//! - [`noise`]: random telegraph noise (RTN) sample paths, 1/f baths built
//!   from log-uniformly distributed switching rates, and PSD estimation.
//! - [`qubit`]: transmon spectrum, its inverse and derivative, and the
//!   closed-form relaxation of the two-level density matrix.
//! - [`analytic`]: single-fluctuator decay factors (series expansion and
//!   exact two-state solution) used as oracles for the Monte Carlo.
//! - [`ramsey`]: the Monte Carlo Ramsey pipeline, envelope models and
//!   frequency sweeps.
//! - [`fit`]: damped least-squares fits of Ramsey fringes and envelopes.
//!
//! Units are SI internally (seconds, Hz, rad/s) with flux in units of the
//! flux quantum and transmon energies as h-frequencies in GHz.

pub mod analytic;
pub mod error;
pub mod fit;
pub mod noise;
pub mod qubit;
pub mod ramsey;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
