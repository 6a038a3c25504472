//! Deterministic simulator and verification harness for shuffling-based
//! distributed optimization: local and minibatch random reshuffling (with
//! and without synchronized shuffling), with-replacement baselines, the
//! worst-case problem constructions that drive the lower bounds, closed-form
//! rate evaluators and a without-replacement concentration validator.
//!
//! Algorithms and problem constructions are registered by name and looked up
//! at runtime; see [`algorithms::AlgorithmRegistry`] and
//! [`problem::ProblemRegistry`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithms;
pub mod cli;
pub mod concentration;
mod error;
pub mod harness;
pub mod problem;
pub mod rates;
pub mod shuffle;

pub use error::{Error, Result};
