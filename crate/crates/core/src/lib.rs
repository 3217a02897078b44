//! Linear non-Markovian stochastic Schrödinger equation for a finite system
//! coupled linearly to a discrete harmonic bath.
//!
//! Trajectories are driven by complex Gaussian noise with the bath
//! correlation function as covariance ([`noise`]) and integrated with one of
//! three memory closures ([`solver`]). Ensembles of trajectories reconstruct
//! the reduced density matrix ([`ensemble`]), which is checked against exact
//! propagation of system and bath together ([`oracle`]).
//!
//! Units have ħ = k_B = 1.

pub mod bargmann;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod grid;
pub mod io;
pub mod model;
pub mod noise;
pub mod numerics;
pub mod oracle;
pub mod presets;
pub mod solver;

pub use error::{Error, Result};
