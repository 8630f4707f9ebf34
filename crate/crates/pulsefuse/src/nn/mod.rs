//! Reverse-mode automatic differentiation over dense f64 tensors.
//!
//! The graph is ephemeral: each forward pass builds a fresh DAG of
//! reference-counted nodes over persistent leaf parameters, `backward`
//! walks it once, and dropping the loss drops the graph. Every operation
//! validates shapes and rejects non-finite results at the point they are
//! produced, so a NaN surfaces where it was born rather than three modules
//! later.

pub mod adam;
pub mod checkpoint;
pub mod conv;
pub mod gradcheck;
pub mod ops;
pub mod rng;
pub mod scan;
pub mod tensor;

pub use adam::{Adam, AdamConfig, OneCycle};
pub use checkpoint::{CheckpointError, ParamSnapshot, ParamStore};
pub use conv::{avgpool_spatial_to1, conv3d, maxpool_spatial2, Pad};
pub use gradcheck::{grad_check, GradCheckReport};
pub use rng::{fnv1a64, splitmix64, DropKey, InitStream};
pub use scan::scan;
pub use tensor::{Tensor, TensorError};
