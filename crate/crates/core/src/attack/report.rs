use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::metrics::Confusion;
use crate::error::{Error, Result};
use crate::losses::DistillConfig;
use crate::models::ArchId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassBreakdown {
    pub class: usize,
    pub confusion: Confusion,
    pub ap: f64,
    pub ar: f64,
    pub f1: f64,
    /// Scored by the fallback model because no class model exists.
    pub fallback: bool,
}

/// Provenance attached to a report. Nothing time-dependent goes in here,
/// so reruns with the same seeds serialize identically.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportMetadata {
    pub seeds: BTreeMap<String, u64>,
    pub shadow_arch: Option<ArchId>,
    /// `None` for a label-trained shadow.
    pub distill: Option<DistillConfig>,
    pub target_overfit: Option<f64>,
    pub shadow_overfit: Option<f64>,
    /// All oracle queries issued over the run, distillation included.
    pub oracle_queries_total: u64,
}

/// Membership-attack scores against the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub ap: f64,
    pub ar: f64,
    pub f1: f64,
    pub confusion: Confusion,
    pub per_class: Vec<ClassBreakdown>,
    pub fallback_records: u64,
    /// Oracle queries issued while scoring.
    pub oracle_queries: u64,
    pub metadata: ReportMetadata,
}

impl AttackReport {
    /// Builds the totals from per-class counts. `fallback[c]` marks classes
    /// scored by the fallback model.
    pub fn from_class_counts(counts: &[Confusion], fallback: &[bool], oracle_queries: u64) -> Self {
        let per_class: Vec<ClassBreakdown> = counts
            .iter()
            .zip(fallback)
            .enumerate()
            .map(|(class, (&confusion, &fallback))| ClassBreakdown {
                class,
                confusion,
                ap: confusion.precision(),
                ar: confusion.recall(),
                f1: confusion.f1(),
                fallback,
            })
            .collect();
        let confusion = counts.iter().fold(Confusion::default(), |a, &b| a.merge(b));
        let fallback_records = per_class
            .iter()
            .filter(|c| c.fallback)
            .map(|c| c.confusion.total())
            .sum();
        AttackReport {
            ap: confusion.precision(),
            ar: confusion.recall(),
            f1: confusion.f1(),
            confusion,
            per_class,
            fallback_records,
            oracle_queries,
            metadata: ReportMetadata::default(),
        }
    }

    /// Pools the counts of two reports over the same classes. Metadata is
    /// kept from `self`.
    pub fn merge(&self, other: &AttackReport) -> Result<AttackReport> {
        if self.per_class.len() != other.per_class.len() {
            return Err(Error::invalid("reports cover different class counts"));
        }
        let counts: Vec<Confusion> = self
            .per_class
            .iter()
            .zip(&other.per_class)
            .map(|(a, b)| a.confusion.merge(b.confusion))
            .collect();
        let fallback: Vec<bool> = self
            .per_class
            .iter()
            .zip(&other.per_class)
            .map(|(a, b)| a.fallback || b.fallback)
            .collect();
        let mut merged =
            AttackReport::from_class_counts(&counts, &fallback, self.oracle_queries + other.oracle_queries);
        merged.fallback_records = self.fallback_records + other.fallback_records;
        merged.metadata = self.metadata.clone();
        Ok(merged)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report fields are serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::invalid(format!("malformed attack report: {e}")))
    }
}
