//! The membership attack. The target is reached only through a
//! [`TeacherOracle`](crate::models::TeacherOracle).

mod attack_set;
mod classifier;
mod evaluate;
mod metrics;
mod report;
mod shadow;

pub use attack_set::{
    attack_set_from_bytes, attack_set_to_bytes, build_attack_set, load_attack_set, save_attack_set,
    AttackRecord, AttackSet, ATTACK_SET_MAGIC, BALANCE_CAP,
};
pub use classifier::{
    attack_model_from_bytes, attack_model_to_bytes, load_attack_model, save_attack_model,
    train_attack_models, AttackConfig, AttackModel, Encoding, Verdict, ATTACK_MODEL_MAGIC,
};
pub use evaluate::evaluate_attack;
pub use metrics::Confusion;
pub use report::{AttackReport, ClassBreakdown, ReportMetadata};
pub use shadow::{distill_shadow, label_trained_shadow};
