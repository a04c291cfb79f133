//! Simulation of feed-forward regression networks running on analog
//! neuromorphic hardware, where neuron activation functions suffer circuit
//! noise and device-to-device shape variation.
//!
//! The crate covers the whole pipeline: Coulomb-matrix featurization of
//! molecular datasets, Levenberg-Marquardt training with early stopping,
//! recall under perturbed activation functions, retraining against realized
//! perturbed activation functions, and the experiment harness that sweeps
//! perturbation amplitude across architectures.

// `!(a > b)` is used on purpose so NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod activation;
pub mod cli;
pub mod data;
pub mod error;
pub mod experiments;
pub mod features;
pub mod matrix;
pub mod network;
pub mod par;
pub mod seeds;
pub mod trainer;

pub use error::{Error, Result};
pub use matrix::Matrix;
