//! Implicitly categorical feature detection and Fourier feature embeddings for
//! tabular deep learning, together with the random-search harness and the
//! evaluation tooling used to compare model families.
//!
//! The numerical kernels are generic over [`Scalar`]; the aliases at the
//! bottom of this file fix the precision used by the harness.

pub mod cfd;
pub mod data;
pub mod error;
pub mod icf;
pub mod lff;
pub mod nn;
pub mod report;
pub mod scalar;
pub mod search;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Precision used for model training inside the search harness.
pub type TrainScalar = f32;

pub type Tensor32 = nn::Tensor<f32>;
pub type Tensor64 = nn::Tensor<f64>;
pub type EncodedTensor32 = cfd::EncodedTensor<f32>;
pub type EncodedTensor64 = cfd::EncodedTensor<f64>;
pub type Lff32 = lff::Lff<f32>;
pub type Lff64 = lff::Lff<f64>;
pub type Network32 = nn::Network<f32>;
pub type Network64 = nn::Network<f64>;
