//! Layer primitives of the tensor core: forward and backward kernels as
//! pure functions over tensors. The autodiff graph dispatches into these.

pub mod activation;
pub mod batchnorm;
pub mod conv;
pub mod kernels;
pub mod loss;
pub mod pool;
pub mod upconv;

pub use activation::{
    add_forward, concat_channels_backward, concat_channels_forward, relu_backward, relu_forward,
    scale_forward, softmax_channels_backward, softmax_channels_forward, sum_squares_forward,
};
pub use batchnorm::{
    batchnorm3d_eval, batchnorm3d_eval_backward, batchnorm3d_train, batchnorm3d_train_backward,
    BnSaved,
};
pub use conv::{conv1x1_backward, conv1x1_forward, conv3d_backward, conv3d_forward};
pub use loss::{cross_entropy_mean_backward, cross_entropy_mean_forward, PROB_CLAMP_MIN};
pub use pool::{maxpool3d_backward, maxpool3d_forward};
pub use upconv::{upconv3d_backward, upconv3d_forward};
