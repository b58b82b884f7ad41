//! The four experiment suites, built on a [`Lab`] that owns the data, the
//! splits and the trained targets.
//!
//! Targets are trained here and handed to the attack side only as
//! [`TeacherOracle`]s.

mod ablation;
mod architectures;
mod missing_class;
mod overfit;
mod stats;

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

pub use ablation::{experiment_ablation, AblationResult, ArmSummary, ARM_LABEL, ARM_MI_SOFTMAX, ARM_SOFTMAX};
pub use architectures::{experiment_architectures, ArchitectureResult};
pub use missing_class::{
    accuracy_with_logit_shift, experiment_missing_class, MissingClassConfig, MissingClassResult,
};
pub use overfit::{experiment_overfit_sweep, OverfitPoint, OverfitSweepResult};
pub use stats::{mean, spearman, stdev};

use crate::attack::{
    build_attack_set, distill_shadow, evaluate_attack, label_trained_shadow, train_attack_models,
    AttackConfig, AttackReport,
};
use crate::data::{Dataset, SplitIndices};
use crate::error::Result;
use crate::losses::{cross_entropy_batch, DistillConfig};
use crate::models::{
    accuracy, as_oracle, build_arch, predict_logits, train_classifier_with_hook, ArchId,
    TeacherOracle, TrainHistory,
};
use crate::nn::{Network, SgdConfig};

/// Independent sub-seed for one pipeline stage (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub const STREAM_TARGET: u64 = 1;
pub const STREAM_SHADOW: u64 = 2;
pub const STREAM_ATTACK: u64 = 3;
pub const STREAM_BALANCE: u64 = 4;

/// Hyperparameters shared by every experiment on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabConfig {
    pub target_arch: ArchId,
    pub shadow_arch: ArchId,
    pub target_sgd: SgdConfig,
    pub shadow_sgd: SgdConfig,
    pub distill: DistillConfig,
    pub attack: AttackConfig,
}

impl LabConfig {
    /// LeNet-5 target and the two-conv shadow on MNIST.
    pub fn mnist() -> Self {
        LabConfig {
            target_arch: ArchId::Lenet5,
            shadow_arch: ArchId::ShadowNn,
            target_sgd: SgdConfig::default(),
            shadow_sgd: SgdConfig {
                learning_rate: 0.01,
                ..SgdConfig::default()
            },
            distill: DistillConfig::default(),
            attack: AttackConfig::default(),
        }
    }

    /// Tabular MLPs for the synthetic presets.
    pub fn tabular() -> Self {
        LabConfig {
            target_arch: ArchId::MlpTabular,
            shadow_arch: ArchId::MlpTabular,
            target_sgd: SgdConfig::default(),
            shadow_sgd: SgdConfig {
                learning_rate: 0.01,
                ..SgdConfig::default()
            },
            distill: DistillConfig::default(),
            attack: AttackConfig::default(),
        }
    }
}

/// A trained target, sealed behind its oracle.
pub struct Target {
    pub oracle: TeacherOracle,
    pub seed: u64,
    pub epochs: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub history: TrainHistory,
}

impl Target {
    pub fn overfitting_level(&self) -> f64 {
        self.train_accuracy - self.test_accuracy
    }

    fn seal(net: Network, lab: &Lab, seed: u64, epochs: usize, history: TrainHistory) -> Result<Self> {
        let train_accuracy = accuracy(&net, &lab.ds, &lab.splits.target_train)?;
        let test_accuracy = accuracy(&net, &lab.ds, &lab.splits.test)?;
        Ok(Target {
            oracle: as_oracle(net),
            seed,
            epochs,
            train_accuracy,
            test_accuracy,
            history,
        })
    }
}

/// How a shadow model is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ShadowKind {
    /// Ground-truth labels only.
    Label,
    /// Distilled from the target's logits.
    Distilled(DistillConfig),
}

impl ShadowKind {
    pub fn distill_config(&self) -> Option<DistillConfig> {
        match self {
            ShadowKind::Label => None,
            ShadowKind::Distilled(c) => Some(*c),
        }
    }
}

/// Everything measured for one shadow/attack run against one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub arm: String,
    pub seed: u64,
    pub shadow_arch: ArchId,
    pub report: AttackReport,
    pub target_test_accuracy: f64,
    pub target_overfit: f64,
    pub shadow_test_accuracy: f64,
    /// Shadow accuracy on the target's training records minus its test
    /// accuracy, the same yardstick as the target's level.
    pub shadow_overfit: f64,
    /// Mean shadow cross-entropy on the target's training records.
    pub member_loss: f64,
    /// Mean shadow cross-entropy on the evaluation non-members.
    pub nonmember_loss: f64,
}

impl ArmResult {
    pub fn loss_gap(&self) -> f64 {
        self.nonmember_loss - self.member_loss
    }
}

/// Data, splits, configuration and a cache of trained targets keyed by
/// seed. Safe to share between threads.
pub struct Lab {
    ds: Dataset,
    splits: SplitIndices,
    cfg: LabConfig,
    targets: Mutex<BTreeMap<u64, Arc<Target>>>,
    arms: Mutex<BTreeMap<String, ArmResult>>,
}

impl Lab {
    pub fn new(ds: Dataset, splits: SplitIndices, cfg: LabConfig) -> Result<Self> {
        splits.check_disjoint(ds.len())?;
        Ok(Lab {
            ds,
            splits,
            cfg,
            targets: Mutex::new(BTreeMap::new()),
            arms: Mutex::new(BTreeMap::new()),
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.ds
    }

    pub fn splits(&self) -> &SplitIndices {
        &self.splits
    }

    pub fn config(&self) -> &LabConfig {
        &self.cfg
    }

    fn fresh_target(&self, seed: u64) -> Result<Network> {
        build_arch(
            self.cfg.target_arch,
            self.ds.sample_shape(),
            self.ds.num_classes(),
            derive_seed(seed, STREAM_TARGET),
        )
    }

    fn target_sgd(&self, seed: u64) -> SgdConfig {
        self.cfg.target_sgd.with_seed(derive_seed(seed, STREAM_TARGET))
    }

    /// The target trained with `seed`, trained on first use.
    pub fn target(&self, seed: u64) -> Result<Arc<Target>> {
        let mut cache = self.targets.lock().expect("target cache poisoned");
        if let Some(t) = cache.get(&seed) {
            return Ok(Arc::clone(t));
        }
        let cfg = self.target_sgd(seed);
        log::info!("training {} target, seed {seed}", self.cfg.target_arch);
        let (net, history) = train_classifier_with_hook(
            self.fresh_target(seed)?,
            &self.ds,
            &self.splits.target_train,
            &[],
            &cfg,
            |_, _| Ok(()),
        )?;
        let t = Arc::new(Target::seal(net, self, seed, cfg.epochs, history)?);
        cache.insert(seed, Arc::clone(&t));
        Ok(t)
    }

    /// Snapshots of one target training run after each epoch in `grid`.
    /// The run lasts `max(grid)` epochs.
    pub fn target_snapshots(&self, seed: u64, grid: &[usize]) -> Result<Vec<Target>> {
        let last = grid.iter().copied().max().unwrap_or(0);
        let cfg = self.target_sgd(seed).with_epochs(last);
        let mut nets = Vec::new();
        let (_, history) = train_classifier_with_hook(
            self.fresh_target(seed)?,
            &self.ds,
            &self.splits.target_train,
            &[],
            &cfg,
            |epoch, net| {
                if grid.contains(&epoch) {
                    nets.push((epoch, net.clone()));
                }
                Ok(())
            },
        )?;
        nets.into_iter()
            .map(|(epoch, net)| {
                let h = TrainHistory {
                    train_accuracy: history.train_accuracy[..epoch].to_vec(),
                    eval_accuracy: Vec::new(),
                    mean_loss: history.mean_loss[..epoch].to_vec(),
                };
                Target::seal(net, self, seed, epoch, h)
            })
            .collect()
    }

    /// Trains a shadow on `shadow_idx` (the full shadow split by default).
    pub fn shadow(
        &self,
        target: &Target,
        seed: u64,
        arch: ArchId,
        kind: ShadowKind,
        shadow_idx: Option<&[usize]>,
    ) -> Result<Network> {
        let idx = shadow_idx.unwrap_or(&self.splits.shadow_train);
        let sgd = self.cfg.shadow_sgd.with_seed(derive_seed(seed, STREAM_SHADOW));
        let (net, _) = match kind {
            ShadowKind::Label => label_trained_shadow(arch, &self.ds, idx, &[], &sgd)?,
            ShadowKind::Distilled(d) => distill_shadow(&target.oracle, arch, &self.ds, idx, &[], &d, &sgd)?,
        };
        Ok(net)
    }

    /// Full attack against `target`: shadow, attack set, attack models and
    /// scoring on all target members against the evaluation non-members.
    /// Results are memoized, so experiments sharing a run pay for it once.
    pub fn run_arm(
        &self,
        arm: &str,
        target: &Target,
        seed: u64,
        arch: ArchId,
        kind: ShadowKind,
    ) -> Result<ArmResult> {
        let key = format!("{}/{}/{seed}/{arch}/{kind:?}", target.seed, target.epochs);
        if let Some(hit) = self.arms.lock().expect("arm cache poisoned").get(&key) {
            let mut hit = hit.clone();
            hit.arm = arm.to_string();
            return Ok(hit);
        }
        let result = self.run_arm_uncached(arm, target, seed, arch, kind)?;
        self.arms
            .lock()
            .expect("arm cache poisoned")
            .insert(key, result.clone());
        Ok(result)
    }

    fn run_arm_uncached(
        &self,
        arm: &str,
        target: &Target,
        seed: u64,
        arch: ArchId,
        kind: ShadowKind,
    ) -> Result<ArmResult> {
        log::info!("arm {arm}: {arch} shadow, seed {seed}");
        let s = &self.splits;
        let shadow = self.shadow(target, seed, arch, kind, None)?;
        let aset = build_attack_set(
            &shadow,
            &self.ds,
            &s.shadow_train,
            s.shadow_out(),
            derive_seed(seed, STREAM_BALANCE),
        )?;
        let mut acfg = self.cfg.attack;
        acfg.sgd.seed = derive_seed(seed, STREAM_ATTACK);
        let models = train_attack_models(&aset, &acfg)?;
        let mut report = evaluate_attack(&models, &target.oracle, &self.ds, &s.target_train, s.eval_out())?;
        let shadow_test_accuracy = accuracy(&shadow, &self.ds, &s.test)?;
        let shadow_overfit = accuracy(&shadow, &self.ds, &s.target_train)? - shadow_test_accuracy;
        let meta = &mut report.metadata;
        meta.seeds.insert("run".into(), seed);
        meta.seeds.insert("target".into(), derive_seed(target.seed, STREAM_TARGET));
        meta.seeds.insert("shadow".into(), derive_seed(seed, STREAM_SHADOW));
        meta.seeds.insert("attack".into(), acfg.sgd.seed);
        meta.seeds.insert("balance".into(), derive_seed(seed, STREAM_BALANCE));
        meta.shadow_arch = Some(arch);
        meta.distill = kind.distill_config();
        meta.target_overfit = Some(target.overfitting_level());
        meta.shadow_overfit = Some(shadow_overfit);
        Ok(ArmResult {
            arm: arm.to_string(),
            seed,
            shadow_arch: arch,
            report,
            target_test_accuracy: target.test_accuracy,
            target_overfit: target.overfitting_level(),
            shadow_test_accuracy,
            shadow_overfit,
            member_loss: mean_loss(&shadow, &self.ds, &s.target_train)?,
            nonmember_loss: mean_loss(&shadow, &self.ds, s.eval_out())?,
        })
    }
}

/// Mean cross-entropy of `net` over `idx`.
pub fn mean_loss(net: &Network, ds: &Dataset, idx: &[usize]) -> Result<f64> {
    let logits = predict_logits(net, ds, idx)?;
    let labels: Vec<usize> = idx.iter().map(|&i| ds.labels()[i]).collect();
    Ok(cross_entropy_batch(&logits, &labels)?.0)
}

/// Header plus one line per row; every row must match the header width.
pub fn to_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        debug_assert_eq!(r.len(), header.len());
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_per_stream() {
        let s: Vec<u64> = (1..5).map(|k| derive_seed(7, k)).collect();
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                assert_ne!(s[i], s[j]);
            }
        }
        assert_eq!(derive_seed(7, 1), derive_seed(7, 1));
        assert_ne!(derive_seed(7, 1), derive_seed(8, 1));
    }

    #[test]
    fn csv_layout() {
        let csv = to_csv(&["a", "b"], &[vec!["1".into(), "2".into()]]);
        assert_eq!(csv, "a,b\n1,2\n");
    }
}
