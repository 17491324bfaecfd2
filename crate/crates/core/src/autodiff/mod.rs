//! Minimal dense reverse-mode automatic differentiation.
//!
//! Operations are recorded on a [`Tape`] as they execute; [`Tape::backward`]
//! walks the record in reverse. Parameters live in a [`ParamStore`] and are
//! bound to a fresh tape for every step.

mod adam;
mod gradcheck;
mod params;
mod tape;

use thiserror::Error;

use crate::tensor::ShapeError;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{grad_check, GradCheckReport};
pub use params::{load_checkpoint, save_checkpoint, BoundParams, ParamStore, PARAMS_FILE, PARAMS_MANIFEST};
pub use tape::{Gradients, Tape, Var};

#[cfg(test)]
pub(crate) use tape::attention_probs;

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("log of non-positive value {0}")]
    LogDomain(f64),
    #[error("backward needs a one-element loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite gradient for parameter {0}; step aborted")]
    NonFiniteGradient(String),
    #[error("function value is not finite: {0}")]
    NonFiniteValue(f64),
    #[error("unknown parameter {0}")]
    UnknownParam(String),
    #[error("duplicate parameter {0}")]
    DuplicateParam(String),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
}
