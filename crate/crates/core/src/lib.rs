//! Inertial gait recognition toolkit.
//!
//! Walking-session extraction, step segmentation, CNN/LSTM identification,
//! pairwise authentication and classical baselines, all trained with the
//! crate's own reverse-mode tensor engine.

pub mod baselines;
pub mod data;
pub mod error;
pub mod eval;
pub mod gaitnets;
pub mod nn;
pub mod par;
pub mod segnet;
pub mod signal;
pub mod tensor;

pub use error::{GaitError, Result};
pub use tensor::{Tensor, Tape, Var};
