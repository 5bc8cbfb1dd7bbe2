//! Tape-based reverse-mode differentiation over [`Tensor`](crate::Tensor) values.

mod conv;
mod gradcheck;
mod graph;
mod norm;
mod pointwise;

pub use conv::{conv_out_extent, ConvGeometry};
pub use gradcheck::{
    compare_with_central_differences, finite_diff_check, finite_diff_check_at, relative_error, GradCheckReport,
    DEFAULT_STEP, RELATIVE_FLOOR,
};
pub use graph::{Gradients, Graph, Var};
pub(crate) use graph::{Backward, BackwardCtx};
pub use norm::{BatchStats, BnMode, RunningStats, BN_EPSILON, BN_MOMENTUM};
