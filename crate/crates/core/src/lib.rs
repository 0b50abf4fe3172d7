//! Local conditional distributions and change of support under the
//! multi-Gaussian model: anamorphosis, simple kriging, conditional moments,
//! block-average laws and the simulation used to check them.

// Negated comparisons are used on purpose so that NaN takes the error path.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anamorphosis;
pub mod blocksupport;
pub mod cli;
pub mod conditional;
pub mod config;
pub mod covariance;
pub mod error;
pub mod gauss;
pub mod hermite;
pub mod kriging;
pub mod linalg;
pub mod quad;
pub mod rng;
pub mod simulate;
pub mod validate;

pub use error::{Error, Result};
