//! Minimal reverse-mode automatic differentiation over dense tensors.
//!
//! Enough machinery to differentiate the ranging networks, the position
//! filter recursion and the trajectory alignment cost end to end: a
//! [`Tape`] of tensor operations, a named [`ParamSet`], an Adam optimizer
//! and a central-difference gradient checker.

mod adam;
pub mod gradcheck;
mod kernels;
mod params;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use params::ParamSet;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("singular matrix (condition estimate {condition:e})")]
    Singular { condition: f64 },
    #[error("tape already consumed by a backward pass")]
    TapeConsumed,
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
}
