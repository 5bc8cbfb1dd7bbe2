//! DKN and FDKN architectures.

mod config;
mod layers;
mod model;

pub use config::{
    Arch, Constraint, DknConfig, FdknConfig, ModelConfig, Streams, DKN_CHANNELS, FDKN_CHANNELS, FDKN_STRIDE,
};
pub use layers::{
    apply_bn_updates, receptive_field, shape_chain, support, total_stride, BnUpdate, LayerSpec, Mode, Pass,
};
#[doc(hidden)]
pub use model::inject_broken_mean_subtraction;
pub use model::{AnyModel, Dkn, Fdkn, Model, RegionOutput, StreamKind};
