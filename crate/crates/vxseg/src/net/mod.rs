//! Declarative network construction: multi-stream encoders (one per input
//! source), a fused decoder with long and short skip connections, and
//! down-scaled classifier branches for deep supervision.

mod build;
mod forward;
mod params;
mod spec;

pub use build::build_network;
pub use forward::{forward, BnHook, ForwardOpts, ForwardPass};
pub use params::{NetworkParams, ParamKind, ParamTensor};
pub use spec::{NetworkSpec, StreamSpec};

/// Batch-normalization epsilon used throughout the networks.
pub const BN_EPS: f64 = 1e-5;
/// Running-statistics momentum: r <- (1 - m) * r + m * batch.
pub const BN_MOMENTUM: f64 = 0.1;
