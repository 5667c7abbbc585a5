//! Conditional diffusion modeling of next-month asset returns and the
//! portfolio pipeline built on top of it.
//!
//! The crate is organized around the flow of data through the pipeline:
//!
//! - [`panel`]: fixed-shape monthly panels of returns and firm
//!   characteristics, preprocessing, and a synthetic generator with a
//!   known factor structure.
//! - [`diffusion`]: the noise schedule, forward noising, and the
//!   ancestral reverse sampler.
//! - [`denoiser`]: the token-per-asset transformer noise predictor with
//!   adaptive-normalization conditioning and exact analytic gradients.
//! - [`training`]: Adam training loop over the train months.
//! - [`moments`]: Monte Carlo samples -> conditional mean/covariance,
//!   PSD repair, and covariance shrinkage.
//! - [`portfolio`]: long-only mean-variance optimization on the simplex
//!   plus the baseline allocations.
//! - [`backtest`]: walk-forward evaluation, metrics, and the
//!   factor-count ablation harness.
//!
//! The crate is `no_std` (with `alloc`); all file formats, plotting, and
//! the CLI live in the companion `factordiff-cli` crate. Every operation
//! here is a pure function of its inputs: randomness always enters
//! through explicit 64-bit seeds feeding counter-based streams
//! ([`rng`]), so results are reproducible bit-for-bit and independent of
//! execution order.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod backtest;
pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod linalg;
pub mod moments;
pub mod panel;
pub mod portfolio;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
pub use linalg::Mat;
