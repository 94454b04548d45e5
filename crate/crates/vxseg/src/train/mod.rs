//! Deeply supervised training: the multi-scale loss, SGD with momentum and
//! weight decay, checkpoint I/O with partial loading, gradient checking,
//! and the training loop itself.

mod checkpoint;
mod gradcheck;
mod loss;
mod optim;
mod run;

pub use checkpoint::{
    load_checkpoint_partial, load_optimizer_state, read_checkpoint, save_checkpoint, CkptData,
    CkptTensor, LoadReport,
};
pub use gradcheck::{
    gradcheck_network, gradcheck_params, EvalOutput, GradCheckConfig, GradCheckReport, TensorCheck,
};
pub use loss::{
    downsample_labels, multiscale_loss_nodes, multiscale_loss_values, LossConfig, LossNodes,
};
pub use optim::{lr_at, OptimConfig, OptimizerState};
pub use run::{
    assemble_streams, loss_rows_to_csv, stream_grids, train, LossRow, TrainSettings,
};
