//! Architecture registry, classifier training and the black-box oracle.

mod arch;
mod oracle;
mod train;

pub use arch::{build_arch, skeleton, ArchId};
pub use oracle::{as_oracle, TeacherOracle};
pub use train::{
    accuracy, fit, overfitting_level, predict_logits, train_classifier,
    train_classifier_with_hook, TrainHistory,
};
