//! Membership inference through distilled shadow models.
//!
//! A target classifier is reachable only as a [`models::TeacherOracle`]
//! returning logits. A shadow network is distilled from those logits with a
//! tempered softmax, per-class attack classifiers are trained on the
//! shadow's posteriors, and the attack is then scored against the target.

pub mod attack;
pub mod cli;
mod codec;
pub mod data;
mod error;
pub mod experiments;
pub mod losses;
pub mod models;
pub mod nn;

pub use error::{Error, Result};
