//! `key = value` run configuration with `[section]` headers.
//!
//! ```text
//! # comments start with '#'
//! [data]
//! preset = mnist
//! mnist_dir = data/mnist
//!
//! [split]
//! target_train = 15000
//! ```
//!
//! Sections: `data`, `split`, `target`, `shadow`, `distill`, `attack`,
//! `experiment`, `run`. Unknown sections and keys are rejected. Every value
//! has a documented default, so an empty file is a valid configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{SplitSpec, DEFAULT_FLIP_PROB};
use crate::experiments::{LabConfig, MissingClassConfig};
use crate::losses::DistillConfig;
use crate::models::ArchId;
use crate::nn::SgdConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Mnist,
    PurchaseLike,
    TexasLike,
    /// Small noiseless indicator set for smoke runs.
    Toy,
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mnist" => Ok(Preset::Mnist),
            "purchase-like" => Ok(Preset::PurchaseLike),
            "texas-like" => Ok(Preset::TexasLike),
            "toy" => Ok(Preset::Toy),
            _ => Err(format!("unknown preset `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShadowMode {
    MiSoftmax,
    Softmax,
    Label,
}

impl FromStr for ShadowMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mi-softmax" => Ok(ShadowMode::MiSoftmax),
            "softmax" => Ok(ShadowMode::Softmax),
            "label" => Ok(ShadowMode::Label),
            _ => Err(format!("unknown shadow mode `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub preset: Preset,
    pub mnist_dir: PathBuf,
    pub flip_prob: f64,
    /// Seed of the synthetic generator.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSettings {
    pub seeds: Vec<u64>,
    pub missing_class: MissingClassConfig,
    pub epoch_grid: Vec<usize>,
    pub archs: Vec<ArchId>,
}

/// Fully resolved configuration. Its JSON form is hashed into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: DataConfig,
    pub split: SplitSpec,
    pub lab: LabConfig,
    pub shadow_mode: ShadowMode,
    pub experiment: ExperimentSettings,
    pub seed: u64,
}

impl RunConfig {
    pub fn defaults(preset: Preset) -> Self {
        let (sizes, lab) = match preset {
            Preset::Mnist => ((15_000, 35_000, 10_000), LabConfig::mnist()),
            Preset::PurchaseLike => ((10_000, 4_662, 4_662), LabConfig::tabular()),
            Preset::TexasLike => ((20_000, 23_665, 23_665), LabConfig::tabular()),
            Preset::Toy => ((200, 200, 200), toy_lab()),
        };
        RunConfig {
            data: DataConfig {
                preset,
                mnist_dir: PathBuf::from("data/mnist"),
                flip_prob: if preset == Preset::Toy { 0.0 } else { DEFAULT_FLIP_PROB },
                seed: 0,
            },
            split: SplitSpec {
                target_train_size: sizes.0,
                shadow_train_size: sizes.1,
                test_size: sizes.2,
                seed: 0,
            },
            lab,
            shadow_mode: ShadowMode::MiSoftmax,
            experiment: ExperimentSettings {
                seeds: vec![0, 1, 2],
                missing_class: MissingClassConfig::default(),
                epoch_grid: vec![1, 2, 4, 6, 10, 15],
                archs: vec![ArchId::VggMini, ArchId::ShadowNn, ArchId::FcOnly],
            },
            seed: 0,
        }
    }

    /// The shadow recipe selected by `[shadow] mode`.
    pub fn distill(&self) -> Option<DistillConfig> {
        match self.shadow_mode {
            ShadowMode::MiSoftmax => Some(self.lab.distill),
            ShadowMode::Softmax => Some(DistillConfig {
                temperature: 1.0,
                ..self.lab.distill
            }),
            ShadowMode::Label => None,
        }
    }

    /// Parses a configuration file; the preset is read first so the other
    /// defaults can follow it.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut sections = parse_sections(text)?;
        let preset = match sections.get_mut("data").and_then(|d| d.remove("preset")) {
            Some(p) => p.parse()?,
            None => Preset::Mnist,
        };
        let mut cfg = RunConfig::defaults(preset);
        for (section, mut entries) in sections {
            cfg.apply_section(&section, &mut entries)?;
            if let Some(key) = entries.keys().next() {
                return Err(format!("unknown key `{key}` in [{section}]"));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        RunConfig::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    fn apply_section(&mut self, section: &str, e: &mut Entries) -> Result<(), String> {
        match section {
            "data" => {
                take(e, "mnist_dir", &mut self.data.mnist_dir)?;
                take(e, "flip_prob", &mut self.data.flip_prob)?;
                take(e, "seed", &mut self.data.seed)?;
            }
            "split" => {
                take(e, "target_train", &mut self.split.target_train_size)?;
                take(e, "shadow_train", &mut self.split.shadow_train_size)?;
                take(e, "test", &mut self.split.test_size)?;
                take(e, "seed", &mut self.split.seed)?;
            }
            "target" => {
                take(e, "arch", &mut self.lab.target_arch)?;
                take_sgd(e, &mut self.lab.target_sgd)?;
            }
            "shadow" => {
                take(e, "arch", &mut self.lab.shadow_arch)?;
                take(e, "mode", &mut self.shadow_mode)?;
                take_sgd(e, &mut self.lab.shadow_sgd)?;
            }
            "distill" => {
                take(e, "temperature", &mut self.lab.distill.temperature)?;
                take(e, "alpha", &mut self.lab.distill.alpha)?;
                take(e, "beta", &mut self.lab.distill.beta)?;
            }
            "attack" => {
                take(e, "encoding", &mut self.lab.attack.encoding)?;
                take(e, "sort", &mut self.lab.attack.sort)?;
                take_sgd(e, &mut self.lab.attack.sgd)?;
            }
            "experiment" => {
                take_list(e, "seeds", &mut self.experiment.seeds)?;
                take_list(e, "epoch_grid", &mut self.experiment.epoch_grid)?;
                take_list(e, "archs", &mut self.experiment.archs)?;
                take(e, "missing_class", &mut self.experiment.missing_class.class_id)?;
                take(e, "bias", &mut self.experiment.missing_class.bias)?;
            }
            "run" => take(e, "seed", &mut self.seed)?,
            other => return Err(format!("unknown section [{other}]")),
        }
        Ok(())
    }

    /// Applies a `--seed` override to the run seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        let s = |r: crate::Result<()>| r.map_err(|e| e.to_string());
        s(self.lab.target_sgd.validate())?;
        s(self.lab.shadow_sgd.validate())?;
        s(self.lab.attack.sgd.validate())?;
        s(self.lab.distill.validate())?;
        if !(0.0..=1.0).contains(&self.data.flip_prob) {
            return Err("flip_prob must lie in [0, 1]".into());
        }
        if self.experiment.seeds.is_empty() {
            return Err("[experiment] seeds must not be empty".into());
        }
        Ok(())
    }

    /// Checks that files the configuration points at exist.
    pub fn check_sources(&self) -> Result<(), String> {
        if self.data.preset == Preset::Mnist && !self.data.mnist_dir.is_dir() {
            return Err(format!(
                "MNIST directory {} does not exist",
                self.data.mnist_dir.display()
            ));
        }
        Ok(())
    }

    /// Canonical JSON, the input of the config hash.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config is serializable")
    }
}

fn toy_lab() -> LabConfig {
    let mut lab = LabConfig::tabular();
    for sgd in [&mut lab.target_sgd, &mut lab.shadow_sgd] {
        sgd.learning_rate = 0.2;
        sgd.epochs = 60;
    }
    lab.attack.sgd.epochs = 60;
    lab.attack.sort = false;
    lab.distill.alpha = 0.1;
    lab.distill.beta = 0.9;
    lab
}

type Entries = BTreeMap<String, String>;

fn parse_sections(text: &str) -> Result<BTreeMap<String, Entries>, String> {
    let mut out: BTreeMap<String, Entries> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim().to_string();
            out.entry(name.clone()).or_default();
            current = Some(name);
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`", n + 1))?;
        let section = current
            .as_ref()
            .ok_or_else(|| format!("line {}: key outside of any [section]", n + 1))?;
        let prev = out
            .get_mut(section)
            .expect("section inserted")
            .insert(k.trim().to_string(), v.trim().to_string());
        if prev.is_some() {
            return Err(format!("line {}: duplicate key `{}`", n + 1, k.trim()));
        }
    }
    Ok(out)
}

fn take<T: FromStr>(e: &mut Entries, key: &str, slot: &mut T) -> Result<(), String>
where
    T::Err: std::fmt::Display,
{
    if let Some(v) = e.remove(key) {
        *slot = v.parse().map_err(|err| format!("bad value for `{key}`: {err}"))?;
    }
    Ok(())
}

fn take_list<T: FromStr>(e: &mut Entries, key: &str, slot: &mut Vec<T>) -> Result<(), String>
where
    T::Err: std::fmt::Display,
{
    if let Some(v) = e.remove(key) {
        *slot = v
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|err| format!("bad entry `{s}` in `{key}`: {err}")))
            .collect::<Result<_, _>>()?;
    }
    Ok(())
}

fn take_sgd(e: &mut Entries, sgd: &mut SgdConfig) -> Result<(), String> {
    take(e, "lr", &mut sgd.learning_rate)?;
    take(e, "momentum", &mut sgd.momentum)?;
    take(e, "batch_size", &mut sgd.batch_size)?;
    take(e, "epochs", &mut sgd.epochs)
}
