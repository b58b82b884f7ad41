use serde::{Deserialize, Serialize};

use super::{Lab, ShadowKind};
use crate::data::{remove_class, Dataset};
use crate::error::{Error, Result};
use crate::losses::argmax;
use crate::models::predict_logits;
use crate::nn::Network;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MissingClassConfig {
    pub class_id: usize,
    /// Constant added to the missing class's logit at prediction time.
    pub bias: f64,
    pub seed: u64,
}

impl Default for MissingClassConfig {
    fn default() -> Self {
        MissingClassConfig {
            class_id: 2,
            bias: 4.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingClassResult {
    pub config: MissingClassConfig,
    /// Test records of the missing class.
    pub class_test_records: usize,
    pub removed_from_shadow: usize,
    pub target_class_accuracy: f64,
    pub distilled_class_accuracy: f64,
    pub distilled_class_accuracy_bias: f64,
    pub distilled_test_accuracy: f64,
    pub distilled_test_errors: usize,
    pub distilled_class_errors: usize,
    pub label_class_accuracy: f64,
    pub label_class_accuracy_bias: f64,
}

/// Accuracy when `shift` is added to the logit of `class` before argmax.
pub fn accuracy_with_logit_shift(
    net: &Network,
    ds: &Dataset,
    idx: &[usize],
    class: usize,
    shift: f64,
) -> Result<f64> {
    Ok(1.0 - errors_with_shift(net, ds, idx, class, shift)? as f64 / idx.len() as f64)
}

fn errors_with_shift(net: &Network, ds: &Dataset, idx: &[usize], class: usize, shift: f64) -> Result<usize> {
    if idx.is_empty() {
        return Err(Error::invalid("accuracy over an empty index set"));
    }
    let logits = predict_logits(net, ds, idx)?;
    let mut wrong = 0;
    for (z, &i) in logits.rows_iter().zip(idx) {
        let mut z = z.to_vec();
        z[class] += shift;
        if argmax(&z) != ds.labels()[i] {
            wrong += 1;
        }
    }
    Ok(wrong)
}

/// Drops one class from the shadow split, then measures how well a
/// distilled shadow and a label-trained shadow recognize that class.
pub fn experiment_missing_class(lab: &Lab, cfg: &MissingClassConfig) -> Result<MissingClassResult> {
    let ds = lab.dataset();
    let s = lab.splits();
    if cfg.class_id >= ds.num_classes() {
        return Err(Error::invalid(format!("class {} out of range", cfg.class_id)));
    }
    let reduced = remove_class(ds, &s.shadow_train, cfg.class_id);
    let class_test: Vec<usize> = s
        .test
        .iter()
        .copied()
        .filter(|&i| ds.labels()[i] == cfg.class_id)
        .collect();
    if class_test.is_empty() || ds.class_counts(&s.target_train)[cfg.class_id] == 0 {
        return Err(Error::invalid(format!(
            "class {} must appear in the target training and test splits",
            cfg.class_id
        )));
    }
    let target = lab.target(cfg.seed)?;
    let arch = lab.config().shadow_arch;
    let distilled = lab.shadow(
        &target,
        cfg.seed,
        arch,
        ShadowKind::Distilled(lab.config().distill),
        Some(&reduced),
    )?;
    let label = lab.shadow(&target, cfg.seed, arch, ShadowKind::Label, Some(&reduced))?;
    let target_logits = target.oracle.query(&ds.gather(&class_test).0)?;
    let target_hits = target_logits
        .rows_iter()
        .filter(|z| argmax(z) == cfg.class_id)
        .count();
    let c = cfg.class_id;
    let class_acc = |net: &Network, shift: f64| accuracy_with_logit_shift(net, ds, &class_test, c, shift);
    let distilled_test_errors = errors_with_shift(&distilled, ds, &s.test, c, 0.0)?;
    Ok(MissingClassResult {
        config: *cfg,
        class_test_records: class_test.len(),
        removed_from_shadow: s.shadow_train.len() - reduced.len(),
        target_class_accuracy: target_hits as f64 / class_test.len() as f64,
        distilled_class_accuracy: class_acc(&distilled, 0.0)?,
        distilled_class_accuracy_bias: class_acc(&distilled, cfg.bias)?,
        distilled_test_accuracy: 1.0 - distilled_test_errors as f64 / s.test.len() as f64,
        distilled_test_errors,
        distilled_class_errors: errors_with_shift(&distilled, ds, &class_test, c, 0.0)?,
        label_class_accuracy: class_acc(&label, 0.0)?,
        label_class_accuracy_bias: class_acc(&label, cfg.bias)?,
    })
}
