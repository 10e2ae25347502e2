//! Learning drift and diffusion of SDEs driven by fractional Brownian motion.
//!
//! The crate is organised bottom-up:
//!
//! * [`noise`]: fBm sampling (circulant embedding, dense Cholesky) and
//!   Mandelbrot–van Ness paths that share white noise across Hurst indices.
//! * [`fields`]: evaluable drift/diffusion pairs and the 1D/2D benchmarks.
//! * [`net`]: shallow tanh networks, their adjoints and Adam.
//! * [`sde`]: Euler rollouts, downsampling, datasets and the rollout adjoint.
//! * [`hurst`]: second-order increment ratio estimator.
//! * [`metrics`]: discrete fractional Sobolev path norm and recovery errors.
//! * [`train`]: fitting the two networks by minimising the path loss.
//! * [`experiments`]: width, Hurst-fitting and time-step error sweeps.

pub mod error;
pub mod experiments;
pub mod fields;
pub mod format;
pub mod hurst;
pub mod metrics;
pub mod net;
pub mod noise;
pub mod rng;
pub mod sde;
pub mod train;

pub use error::{Error, Result};
