//! Socket-and-plug calibration for multivariate time-series forecasting.
//!
//! A trained forecaster (the *socket*) is frozen; each group of its output
//! targets gets a small MLP calibrator (a *plug*) trained on the socket's
//! own predictions with a private optimizer and a private early-stopping
//! monitor. Because each plug stops on its own schedule, heterogeneous
//! targets no longer fight over one stopping decision — which is exactly
//! the failure mode of collective calibration this crate exists to
//! demonstrate.
//!
//! Module map:
//! - [`numerics`] — tensors, RNG, reverse-mode tape, Adam, MLP (generic
//!   over [`numerics::Scalar`]; `f32` for pipelines, `f64` for oracles)
//! - [`data`] — CSV ingestion, synthetic generation, normalization,
//!   chronological splits, windowing, tensor files
//! - [`socket`] — the frozen forecasters and their prediction caches
//! - [`plug`] — target partitioning and the calibrator modules
//! - [`calibrate`] — per-plug training loops, monitors, run artifacts
//! - [`eval`] — metrics, promotion, conflict diagnostics, report emission

pub mod calibrate;
pub mod data;
pub mod error;
pub mod eval;
pub(crate) mod hash;
pub mod numerics;
pub mod plug;
pub mod socket;

pub use error::{Error, Result};

/// Pipeline-precision tensor (file formats and training all use f32).
pub type Tensor32 = numerics::Tensor<f32>;
/// High-precision tensor for gradient checks and oracles.
pub type Tensor64 = numerics::Tensor<f64>;
pub type Mlp32 = numerics::Mlp<f32>;
pub type Plug32 = plug::Plug<f32>;
pub type PlugBank32 = plug::PlugBank<f32>;
