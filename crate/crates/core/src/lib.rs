//! Kernelized bandit laboratory.
//!
//! Gaussian-process surrogates over a finite grid, test functions with a
//! known RKHS norm, confidence-width schedules, maximal information gain,
//! selection policies and the Monte Carlo harness that measures regret and
//! confidence-interval coverage.

// `!(x > 0.0)` style guards are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod harness;
pub mod info_gain;
pub mod kernel;
pub mod output;
pub mod policy;
pub mod posterior;
pub mod rkhs;
pub mod seeds;
pub mod widths;

pub use config::{ConfigError, ExperimentConfig};
pub use error::{Error, Result};
pub use kernel::{kernel_matrix, Domain, KernelFamily, KernelSpec, NystromBasis, Smoothness};
pub use posterior::{GridPosterior, Posterior, RidgeState};
pub use rkhs::{sample_rkhs_function, FunctionForm, NoiseKind, NoiseModel, RkhsFunction};
pub use widths::{WidthKind, WidthParams, WidthSchedule};
