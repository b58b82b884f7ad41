use serde::{Deserialize, Serialize};

use super::{mean, stdev, to_csv, ArmResult, Lab, ShadowKind};
use crate::error::{Error, Result};
use crate::losses::DistillConfig;

pub const ARM_LABEL: &str = "label-trained";
pub const ARM_SOFTMAX: &str = "softmax";
pub const ARM_MI_SOFTMAX: &str = "mi-softmax";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: String,
    pub runs: usize,
    pub mean_f1: f64,
    pub stdev_f1: f64,
    pub mean_ap: f64,
    pub mean_ar: f64,
}

impl ArmSummary {
    pub(crate) fn of(arm: &str, rows: &[&ArmResult]) -> Self {
        let f1: Vec<f64> = rows.iter().map(|r| r.report.f1).collect();
        let ap: Vec<f64> = rows.iter().map(|r| r.report.ap).collect();
        let ar: Vec<f64> = rows.iter().map(|r| r.report.ar).collect();
        ArmSummary {
            arm: arm.to_string(),
            runs: rows.len(),
            mean_f1: mean(&f1),
            stdev_f1: stdev(&f1),
            mean_ap: mean(&ap),
            mean_ar: mean(&ar),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub rows: Vec<ArmResult>,
    pub summary: Vec<ArmSummary>,
}

impl AblationResult {
    pub fn arm(&self, name: &str) -> Option<&ArmSummary> {
        self.summary.iter().find(|s| s.arm == name)
    }

    pub fn row(&self, name: &str, seed: u64) -> Option<&ArmResult> {
        self.rows.iter().find(|r| r.arm == name && r.seed == seed)
    }

    pub fn to_csv(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.arm.clone(),
                    r.seed.to_string(),
                    r.report.ap.to_string(),
                    r.report.ar.to_string(),
                    r.report.f1.to_string(),
                    r.shadow_test_accuracy.to_string(),
                    r.target_test_accuracy.to_string(),
                    r.member_loss.to_string(),
                    r.nonmember_loss.to_string(),
                ]
            })
            .collect();
        to_csv(
            &[
                "arm",
                "seed",
                "ap",
                "ar",
                "f1",
                "shadow_test_accuracy",
                "target_test_accuracy",
                "member_loss",
                "nonmember_loss",
            ],
            &rows,
        )
    }
}

/// Label-trained, temperature-1 distilled and tempered distilled shadows,
/// each attacked once per seed against the same per-seed target.
pub fn experiment_ablation(lab: &Lab, seeds: &[u64]) -> Result<AblationResult> {
    if seeds.is_empty() {
        return Err(Error::invalid("ablation needs at least one seed"));
    }
    let tempered = lab.config().distill;
    let arms = [
        (ARM_LABEL, ShadowKind::Label),
        (
            ARM_SOFTMAX,
            ShadowKind::Distilled(DistillConfig {
                temperature: 1.0,
                ..tempered
            }),
        ),
        (ARM_MI_SOFTMAX, ShadowKind::Distilled(tempered)),
    ];
    let arch = lab.config().shadow_arch;
    let mut rows = Vec::new();
    for &seed in seeds {
        let target = lab.target(seed)?;
        for (name, kind) in arms {
            rows.push(lab.run_arm(name, &target, seed, arch, kind)?);
        }
    }
    let summary = arms
        .iter()
        .map(|(name, _)| {
            let mine: Vec<&ArmResult> = rows.iter().filter(|r| r.arm == *name).collect();
            ArmSummary::of(name, &mine)
        })
        .collect();
    Ok(AblationResult { rows, summary })
}
