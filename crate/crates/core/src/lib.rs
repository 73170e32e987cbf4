//! Post-hoc probability calibration.
//!
//! `calibra-core` fits calibration maps to classifier outputs and measures
//! how well calibrated those outputs are. It contains:
//!
//! * [`metrics`]: binned expected/maximum calibration error, over- and
//!   underconfidence, negative log-likelihood and reliability data.
//! * [`kernel`]: the one-dimensional RBF + white-noise kernel.
//! * [`gpcalib`]: calibration with a shared latent Gaussian process behind a
//!   softargmax link, fit by sparse variational inference.
//! * [`baselines`]: Platt scaling, isotonic regression, beta calibration,
//!   Bayesian binning into quantiles, temperature scaling and a one-vs-all
//!   wrapper.
//! * [`synthetic`]: generators of miscalibrated outputs with known
//!   ground-truth calibration maps.
//!
//! The crate is `no_std` and only needs `alloc`. File formats and the command
//! line live in the `calibra` crate.

#![cfg_attr(not(test), no_std)]
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod baselines;
mod error;
pub mod gpcalib;
pub mod kernel;
pub mod linalg;
pub mod math;
pub mod metrics;
pub mod synthetic;

pub use error::{Error, Result};
pub use metrics::{PredictionSet, ScoreKind};
