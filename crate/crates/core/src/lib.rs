//! Photon generation from vacuum through Landau-Zener sweeps of a modulated
//! qubit frequency in circuit QED.
//!
//! The crate integrates the Lindblad master equation of the Rabi model with a
//! sinusoidally modulated qubit frequency whose modulation frequency is swept
//! linearly in time, under three dissipator kernels (phenomenological,
//! Jaynes-Cummings dressed and Rabi dressed). Reduced effective Hamiltonians
//! for the resonant and dispersive regimes are provided for cross-validation.
//!
//! Units: `ħ = 1`, `ω₀ = 1`. Every frequency is a multiple of the cavity
//! frequency and every time is in units of `1/ω₀`.

pub mod cli;
pub mod dissipators;
pub mod effective;
pub mod error;
pub mod integrator;
pub mod linalg;
pub mod model;
pub mod observables;
pub mod qops;
pub mod spectrum;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector, C64};
