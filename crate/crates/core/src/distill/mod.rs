//! Desk-scale multi-teacher distillation: feature-matching losses, AdaLoss balancing,
//! synthetic teachers, and a harness that trains a small student against them.

mod adaloss;
mod harness;
mod loss;
mod teacher;

pub use adaloss::{adaloss_update, AdaLossState};
pub use harness::{
    method_label, run_distillation, Activation, AdaLossConfig, DistillConfig, DistillReport, Histogram,
    StudentConfig, TeacherConfig, TeacherReport, Trajectory,
};
pub use loss::{loss_cosine, loss_hybrid, loss_mse, loss_smooth_l1, LossConfig, LossKind};
pub use teacher::{make_teacher, SyntheticShape, TeacherSpec, REFERENCE_TEACHERS};
