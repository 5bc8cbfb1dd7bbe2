//! Deformable kernel networks for joint image filtering.
//!
//! The networks predict, for every output pixel, a small set of kernel weights and
//! fractional sampling offsets; the output is the weighted average of the target sampled
//! bilinearly at those positions. Everything is generic over [`Scalar`] (`f32` for
//! training and inference, `f64` for gradient checking).

pub mod autodiff;
pub mod data;
pub mod error;
pub mod eval;
pub mod filter;
pub mod io;
pub mod kv;
pub mod nets;
pub mod param;
pub mod resample;
pub mod sampling;
pub mod scalar;
pub mod selftest;
pub mod stitch;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use filter::{JointFilter, KernelField, OutputGrid};
pub use nets::{AnyModel, Dkn, DknConfig, Fdkn, FdknConfig, Model, ModelConfig};
pub use param::ParamStore;
pub use scalar::Scalar;
pub use tensor::Tensor;

/// Version of this crate, recorded in run metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Dkn32 = Dkn<f32>;
pub type Dkn64 = Dkn<f64>;
pub type Fdkn32 = Fdkn<f32>;
pub type Fdkn64 = Fdkn<f64>;
