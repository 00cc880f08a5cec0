//! Meta-learning based noise-tolerant training for small dense classifiers.
//!
//! Before each ordinary cross-entropy update, the student takes a meta step:
//! several copies of the mini-batch get synthetic label noise by copying
//! labels from nearby samples, each copy drives one inner SGD step, and the
//! student is moved so that all of the inner-updated models agree (in KL)
//! with an exponential-moving-average teacher. Later iterations use the best
//! model of the previous one as a mentor to drop implausible labels and to
//! sharpen the consistency targets.
//!
//! - [`tensor`]: matrices, the MLP, losses, optimisers, finite differences
//! - [`noise`]: label corruption, feature index, synthetic label sets
//! - [`train`]: the training step and loops
//! - [`data`]: datasets, benchmarks, checkpoints, metrics CSV
//! - [`harness`]: experiment configs, runs, sweeps and reports

pub mod data;
pub mod error;
pub mod eval;
pub mod harness;
pub mod noise;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
