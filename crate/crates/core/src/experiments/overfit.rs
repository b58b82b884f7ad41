use serde::{Deserialize, Serialize};

use super::{spearman, to_csv, Lab, ShadowKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverfitPoint {
    pub epochs: usize,
    pub target_overfit: f64,
    pub shadow_overfit: f64,
    pub f1: f64,
    pub ap: f64,
    pub ar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverfitSweepResult {
    pub seed: u64,
    pub points: Vec<OverfitPoint>,
}

impl OverfitSweepResult {
    /// Rank correlation between target and shadow overfitting levels.
    pub fn overfit_correlation(&self) -> f64 {
        let t: Vec<f64> = self.points.iter().map(|p| p.target_overfit).collect();
        let s: Vec<f64> = self.points.iter().map(|p| p.shadow_overfit).collect();
        spearman(&t, &s)
    }

    /// F1 drops between consecutive points ordered by target overfitting.
    pub fn f1_inversions(&self) -> Vec<f64> {
        let mut pts: Vec<&OverfitPoint> = self.points.iter().collect();
        pts.sort_by(|a, b| a.target_overfit.total_cmp(&b.target_overfit));
        pts.windows(2)
            .filter(|w| w[1].f1 < w[0].f1)
            .map(|w| w[0].f1 - w[1].f1)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .points
            .iter()
            .map(|p| {
                vec![
                    p.epochs.to_string(),
                    p.target_overfit.to_string(),
                    p.shadow_overfit.to_string(),
                    p.f1.to_string(),
                ]
            })
            .collect();
        to_csv(&["epochs", "target_overfit", "shadow_overfit", "F1"], &rows)
    }
}

/// Snapshots one target run at each grid epoch and attacks every snapshot
/// through a freshly distilled shadow.
pub fn experiment_overfit_sweep(lab: &Lab, seed: u64, epoch_grid: &[usize]) -> Result<OverfitSweepResult> {
    let mut grid = epoch_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    if grid.is_empty() || grid[0] == 0 {
        return Err(Error::invalid("epoch grid needs positive epoch counts"));
    }
    let arch = lab.config().shadow_arch;
    let kind = ShadowKind::Distilled(lab.config().distill);
    let mut points = Vec::new();
    for target in lab.target_snapshots(seed, &grid)? {
        let r = lab.run_arm("mi-softmax", &target, seed, arch, kind)?;
        points.push(OverfitPoint {
            epochs: target.epochs,
            target_overfit: r.target_overfit,
            shadow_overfit: r.shadow_overfit,
            f1: r.report.f1,
            ap: r.report.ap,
            ar: r.report.ar,
        });
    }
    Ok(OverfitSweepResult { seed, points })
}
