//! Semi-supervised sequential variational Bayes with domain-adversarial
//! transfer, for estimating soft-finger states from proprioceptive signals.
//!
//! The crate bundles its own reverse-mode differentiation engine
//! ([`diffcore`]), recurrent cells, the variational recurrent model, the
//! adversarial training loop, a synthetic two-domain finger simulator and the
//! `dsvb` command-line tool.

pub mod cells;
pub mod checkpoint;
pub mod cli;
pub mod dat;
pub mod data;
pub mod diffcore;
pub mod error;
pub mod loss;
pub mod nn;
pub mod scenarios;
pub mod trainer;
pub mod vrnn;

pub use error::{DsvbError, Result};
