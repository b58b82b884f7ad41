use serde::{Deserialize, Serialize};

use super::ablation::{ArmSummary, ARM_LABEL};
use super::{to_csv, ArmResult, Lab, ShadowKind};
use crate::error::{Error, Result};
use crate::models::ArchId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureResult {
    /// Distilled rows, one per (architecture, seed).
    pub rows: Vec<ArmResult>,
    /// Label-trained default-architecture rows on the same seeds.
    pub baseline: Vec<ArmResult>,
    pub summary: Vec<ArmSummary>,
    pub baseline_summary: ArmSummary,
}

impl ArchitectureResult {
    /// Largest minus smallest mean F1 across architectures.
    pub fn f1_spread(&self) -> f64 {
        let f1 = self.summary.iter().map(|s| s.mean_f1);
        let max = f1.clone().fold(f64::NEG_INFINITY, f64::max);
        let min = f1.fold(f64::INFINITY, f64::min);
        max - min
    }

    pub fn to_csv(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .chain(&self.baseline)
            .map(|r| {
                vec![
                    r.arm.clone(),
                    r.shadow_arch.to_string(),
                    r.seed.to_string(),
                    r.report.f1.to_string(),
                    r.shadow_test_accuracy.to_string(),
                ]
            })
            .collect();
        to_csv(&["arm", "shadow_arch", "seed", "f1", "shadow_test_accuracy"], &rows)
    }
}

/// Tempered distillation into every architecture in `archs`, compared with
/// the label-trained shadow of the configured architecture.
pub fn experiment_architectures(lab: &Lab, seeds: &[u64], archs: &[ArchId]) -> Result<ArchitectureResult> {
    if seeds.is_empty() || archs.is_empty() {
        return Err(Error::invalid("architecture sweep needs seeds and architectures"));
    }
    let kind = ShadowKind::Distilled(lab.config().distill);
    let mut rows = Vec::new();
    let mut baseline = Vec::new();
    for &seed in seeds {
        let target = lab.target(seed)?;
        for &arch in archs {
            rows.push(lab.run_arm(arch.as_str(), &target, seed, arch, kind)?);
        }
        baseline.push(lab.run_arm(ARM_LABEL, &target, seed, lab.config().shadow_arch, ShadowKind::Label)?);
    }
    let summary = archs
        .iter()
        .map(|a| {
            let mine: Vec<&ArmResult> = rows.iter().filter(|r| r.shadow_arch == *a).collect();
            ArmSummary::of(a.as_str(), &mine)
        })
        .collect();
    let baseline_summary = ArmSummary::of(ARM_LABEL, &baseline.iter().collect::<Vec<_>>());
    Ok(ArchitectureResult {
        rows,
        baseline,
        summary,
        baseline_summary,
    })
}
