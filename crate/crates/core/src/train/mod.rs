//! Noise-tolerant meta-learning: single-step operations and training loops.

pub mod hyper;
pub mod meta;
pub mod run;

pub use hyper::{EtaSchedule, GammaSchedule, HyperOverride, IterationPlan, LambdaSchedule, MetaGradMode, MlntHyper};
pub use meta::{
    blend_targets, classification_update, consistency_loss, ema_update, filter_dataset, meta_loss_and_grad,
    meta_train_step, meta_update, ClassificationStep, MentorState, TeacherState,
};
pub use run::{
    epoch_batches, pretrain_features, run_iterative_training, train_baseline, train_iteration, Batch, CeLearner,
    IterationResult, IterationSetup, IterativeOutcome, Learner, MlntLearner, StepSchedule, StepStats,
};
