//! Robust binary classification with restricted minimum error entropy (RMEE).
//!
//! The crate is `no_std` and only needs `alloc`. It provides:
//!
//! * [`kernel`]: Gaussian kernels, Parzen density estimates, the quadratic
//!   information potential and the analytic error density of a sigmoid
//!   classifier on Gaussian classes.
//! * [`quantize`]: the online adaptive quantizer and the codebook type shared
//!   by QMEE and RMEE.
//! * [`criteria`]: CE, MSE, C-Loss, QMEE and RMEE objectives.
//! * [`model`]: logistic regression and extreme learning machine backends.
//! * [`optim`]: half-quadratic alternating maximization, Adam, peak-count
//!   estimation and kernel bandwidth cross-validation.
//! * [`data`]: toy generators, outlier injection, normalization and splits.
//!
//! Kernel-based objectives are always reported as values to maximize;
//! CE and MSE are risks to minimize.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod criteria;
pub mod data;
mod error;
pub mod kernel;
pub mod linalg;
mod math;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod quantize;
pub mod rng;

pub use error::{Error, Result};
