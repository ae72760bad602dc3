//! Covariate-adaptive false discovery rate control with a hierarchical
//! two-groups model.
//!
//! A small neural network maps test-level covariates to per-test Beta
//! priors on the alternative probability, an optional bivariate regression
//! on auxiliary features adjusts them, and a step-down rule turns the
//! resulting posteriors into a discovery set. The alternative density is
//! estimated nonparametrically by predictive recursion.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod baselines;
pub mod error;
pub mod matrix;
pub mod numerics;
pub mod pipeline;
pub mod prior;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub mod recursion;
pub mod regression;
pub mod rng;
pub mod simgen;
pub mod twogroups;
