//! Geometric matrix completion for incomplete tabular data.
//!
//! Subjects are rows of a matrix `Z = [Y | T]` that stacks numerical
//! features `Y` with binary labels `T`. Missing features and unknown labels
//! are recovered together: classification becomes completion of the label
//! column. The crate provides
//!
//! * [`autodiff`]: a small reverse-mode engine over dense matrices,
//! * [`graph`]: population graphs over subjects and their Laplacians,
//! * [`completion`]: nuclear-norm and factorized completion solvers,
//! * [`srgcnn`]: a Chebyshev graph-convolution + LSTM diffusion model that
//!   learns increments of the row factor,
//! * [`data`]: CSV ingestion, dataset assembly and synthetic instances,
//! * [`eval`]: metrics, stratified cross-validation and ablations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod completion;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod graph;
pub mod linalg;
pub mod par;
pub mod srgcnn;
pub mod tensor;

pub use error::{GmcError, Result};
pub use tensor::Tensor;
