//! Minimum-volume β-divergence NMF for single-channel blind audio source
//! separation.
//!
//! The crate is organised bottom-up:
//!
//! - [`signal`]: WAV I/O, mixing and resampling of mono signals.
//! - [`stft`]: forward/inverse short-time Fourier transform and amplitude
//!   spectrograms.
//! - [`divergences`]: β-divergences, the log-det volume and the penalised
//!   objective.
//! - [`solver`]: multiplicative-update solvers (min-vol KL, min-vol IS,
//!   baseline β-NMF and sparse KL) with the normalising line search.
//! - [`separation`]: masks and waveform reconstruction on top of a solver.
//! - [`evaluation`]: BSS metrics, factor matching and synthetic instances.
//! - [`export`]: CSV writers for matrices, traces and spectrograms.

pub mod divergences;
pub mod error;
pub mod evaluation;
pub mod export;
mod linalg;
pub mod separation;
pub mod signal;
pub mod solver;
pub mod stft;

pub use error::{Error, Result};

/// Lower bound applied to divergence arguments and reconstructed products.
pub const EVAL_FLOOR: f64 = 1e-12;

/// Lower bound applied to every factor entry after an update.
pub const FACTOR_FLOOR: f64 = 1e-16;

/// Version of this library, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
