//! Temperature distillation with gradient filtering and the teacher gate.

mod filter;
mod loss;
mod train;

pub use filter::{grad_filter_weight, FilterKind, FilterSpec, DEFAULT_ETA};
pub use loss::{
    filter_weights, kd_logit_gradient, kd_loss_per_sample, kddg_batch_loss, kddg_logit_loss,
    kddg_logit_loss_weighted, label_smooth, soft_target_logit_loss, teacher_gate,
    vanilla_student_loss, Batch, BatchLossReport, DistillConfig,
};
pub use train::{
    accuracy, architecture_of, concat_sources, init_network, train_deepall, train_network,
    train_student, EpochRecord, MetricsLog, Objective, StepOutcome, TrainSettings, Trainer,
};
