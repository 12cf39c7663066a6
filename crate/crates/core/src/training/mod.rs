//! Batching, optimization and the training loop.

mod batch;
mod optim;
mod train;

pub use batch::{
    make_batches, pack_batch, pack_with_plan, repack_frames, shuffled_batches, unpack_batch,
    BatchPlan,
};
pub use optim::{adamw_step, adamw_update, lr_schedule, AdamHyper, OptimizerState, PlateauTracker};
pub use train::{
    derive_seed, infer, predict_all, prepare_signal, train_loop, train_loop_with, validate,
    EpochRecord, TrainConfig, TrainOutputs, TrainingLog, ValMetrics, FRAME_SAMPLES, LOG_HEADER,
};
