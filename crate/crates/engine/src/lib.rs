//! Two-stage distillation of a streaming transducer from a full-context
//! teacher on a synthetic task.

pub mod error;
pub mod eval;
pub mod matrix;
pub mod schedule;
pub mod synth;
pub mod train;

pub use error::{EngineError, Result};
pub use eval::{evaluate, relative_reduction, token_error_rate, EvalMetrics};
pub use matrix::{run_matrix, Entry, ExperimentConfig, MatrixResult};
pub use schedule::{OutputDistill, Stage, StageSchedule, Variant};
pub use synth::{generate, Corpus, SynthTaskConfig, Utterance};
pub use train::{
    item_gradient, teacher_targets, train_student, train_teacher, FinalMetrics, LossParts, OptimSettings,
    StepRecord, TeacherTargets, TrainReport,
};
