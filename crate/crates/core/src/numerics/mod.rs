//! Minimal differentiable tensor core.
//!
//! Values are dense row-major `f64` arrays ([`Tensor`]). Operations are
//! recorded on a [`Tape`] as they execute and differentiated by a single
//! reverse sweep. A tape is built per forward pass and dropped afterwards.

mod conv;
pub mod fft;
mod gradcheck;
mod loss;
mod ops;
mod spectral;
mod tape;
mod tensor;

use thiserror::Error;

pub use conv::causal_depthwise_conv;
pub use gradcheck::{grad_check, grad_check_many, relative_error, GradCheckReport, DEFAULT_EPS, REL_FLOOR};
pub use loss::softmax_cross_entropy;
pub use ops::{gelu_derivative, gelu_scalar};
pub use spectral::{irfft, rfft, ComplexSpectrum};
pub use tape::{BackwardFn, Grads, NodeId, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    Domain(String),
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("index {index} out of range for extent {bound}")]
    IndexOutOfRange { index: usize, bound: usize },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
}
