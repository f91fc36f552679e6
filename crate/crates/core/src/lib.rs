//! Beamformed space-time block coding for mmWave MISO links.
//!
//! Golden-ratio Hadamard beamformers, their phase optimization, Alamouti
//! encoding and decoding, closed-form and semi-analytic link metrics, and a
//! seeded Monte Carlo harness that regenerates the evaluation tables.

// Oracle tables in tests keep every printed digit.
#![cfg_attr(
    test,
    allow(
        clippy::approx_constant,
        clippy::excessive_precision,
        clippy::field_reassign_with_default,
        clippy::needless_range_loop
    )
)]

pub mod analysis;
pub mod beamformer;
pub mod channel;
pub mod error;
pub mod harness;
pub mod phase_opt;
pub mod quadrature;
pub mod rng;
pub mod stbc;

pub use error::{Error, Result};
