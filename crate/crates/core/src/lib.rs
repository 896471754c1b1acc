#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Simulation of amplitude-noise-limited single-qubit rotations: noise
//! generation, stochastic Schrödinger dynamics, closed-form fidelity moments,
//! measurement and SPAM modelling, randomized benchmarking, and an experiment
//! harness that writes reproducible result files.

pub mod analytics;
pub mod benchmarking;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod noise;
pub mod measurement;
pub mod rng;

pub use error::{Error, Result};
