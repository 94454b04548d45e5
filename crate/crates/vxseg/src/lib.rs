//! Volumetric tissue segmentation with context-guided, multi-stream 3D
//! fully convolutional networks.
//!
//! The crate is organized around the pipeline it implements:
//!
//! - [`tensor`], [`ops`], [`graph`]: dense tensors and reverse-mode
//!   autodiff over the 3D layer primitives (convolution, pooling,
//!   transposed convolution, batch normalization, softmax, cross-entropy).
//! - [`net`]: declarative construction of the multi-stream encoder /
//!   fused-decoder networks with long and short skip connections and
//!   multi-scale classifier branches.
//! - [`train`]: deeply supervised multi-scale loss, SGD with momentum and
//!   weight decay, checkpointing with partial (name-filtered) loading,
//!   finite-difference gradient checking, and the training loop.
//! - [`volume`]: volume I/O (a native raw format plus a NIfTI-1 reader),
//!   patch sampling, normalization, augmentation, and the synthetic
//!   phantom generator used for desk-scale experiments.
//! - [`context`]: the two-stage glue — initial segmentation, per-tissue
//!   Euclidean distance maps, second-stage orchestration.
//! - [`infer`]: overlapped sliding-window inference with probability
//!   averaging, morphological cleanup, and the DOC/ASD/MHD metrics.
//! - [`oracles`]: naive reference implementations the test suite checks
//!   the fast kernels against.

pub mod context;
pub mod dtype;
pub mod error;
pub mod glob;
pub mod graph;
pub mod infer;
pub mod net;
pub mod ops;
pub mod oracles;
pub mod tensor;
pub mod threads;
pub mod train;
pub mod volume;

pub use dtype::{Dtype, Scalar};
pub use error::{VxError, VxResult};
pub use graph::{Graph, NodeId};
pub use tensor::{IntGrid, Tensor};

/// Forward execution mode. Train mode uses batch statistics in batch
/// normalization (and reports them for the running-buffer update); eval
/// mode uses the stored running statistics and is bit-deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
