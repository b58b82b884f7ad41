use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codec::{read_file, write_file, Reader, Writer};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses::softmax_rows;
use crate::models::predict_logits;
use crate::nn::Network;

pub const ATTACK_SET_MAGIC: &[u8; 8] = b"LLASET1\0";

/// Largest share either membership side may hold within one class bucket.
pub const BALANCE_CAP: f64 = 0.6;

#[derive(Debug, Clone, PartialEq)]
pub struct AttackRecord {
    pub posterior: Vec<f64>,
    pub member: bool,
}

/// Shadow posteriors bucketed by ground-truth class.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackSet {
    num_classes: usize,
    buckets: Vec<Vec<AttackRecord>>,
    dropped: Vec<usize>,
    pre_balance: usize,
}

impl AttackSet {
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Bucket for class `c`; empty when the class was dropped.
    pub fn bucket(&self, c: usize) -> &[AttackRecord] {
        &self.buckets[c]
    }

    pub fn buckets(&self) -> &[Vec<AttackRecord>] {
        &self.buckets
    }

    /// Classes that lacked members or non-members and were left empty.
    pub fn dropped(&self) -> &[usize] {
        &self.dropped
    }

    /// Record count before balancing and dropping.
    pub fn pre_balance_count(&self) -> usize {
        self.pre_balance
    }

    pub fn len(&self) -> usize {
        self.buckets.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(members, non-members)` in class `c`.
    pub fn side_counts(&self, c: usize) -> (usize, usize) {
        let m = self.buckets[c].iter().filter(|r| r.member).count();
        (m, self.buckets[c].len() - m)
    }
}

/// Runs the shadow on its own training records (members) and on held-out
/// records (non-members), buckets the posteriors by ground-truth label and
/// subsamples the majority side of each bucket down to the balance cap.
pub fn build_attack_set(
    shadow: &Network,
    ds: &Dataset,
    shadow_train_idx: &[usize],
    shadow_out_idx: &[usize],
    balance_seed: u64,
) -> Result<AttackSet> {
    let mut in_train = vec![false; ds.len()];
    for &i in shadow_train_idx {
        in_train[i] = true;
    }
    if shadow_out_idx.iter().any(|&i| in_train[i]) {
        return Err(Error::invalid("shadow member and non-member indices overlap"));
    }
    let c = ds.num_classes();
    let mut buckets: Vec<Vec<AttackRecord>> = vec![Vec::new(); c];
    for (idx, member) in [(shadow_train_idx, true), (shadow_out_idx, false)] {
        if idx.is_empty() {
            continue;
        }
        let probs = softmax_rows(&predict_logits(shadow, ds, idx)?, 1.0)?;
        for (row, &i) in probs.rows_iter().zip(idx) {
            buckets[ds.labels()[i]].push(AttackRecord {
                posterior: row.to_vec(),
                member,
            });
        }
    }
    let pre_balance = buckets.iter().map(Vec::len).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(balance_seed);
    let mut dropped = Vec::new();
    for (class, bucket) in buckets.iter_mut().enumerate() {
        if bucket.is_empty() {
            continue;
        }
        let (members, others): (Vec<_>, Vec<_>) = bucket.drain(..).partition(|r| r.member);
        if members.is_empty() || others.is_empty() {
            dropped.push(class);
            continue;
        }
        let cap = |minority: usize| (minority as f64 * BALANCE_CAP / (1.0 - BALANCE_CAP)).floor() as usize;
        let (members, others) = if members.len() > cap(others.len()) {
            (subsample(members, cap(others.len()), &mut rng), others)
        } else if others.len() > cap(members.len()) {
            let keep = cap(members.len());
            (members, subsample(others, keep, &mut rng))
        } else {
            (members, others)
        };
        bucket.extend(members);
        bucket.extend(others);
    }
    if !dropped.is_empty() {
        log::warn!("attack set: classes {dropped:?} lack members or non-members and were dropped");
    }
    Ok(AttackSet {
        num_classes: c,
        buckets,
        dropped,
        pre_balance,
    })
}

fn subsample(records: Vec<AttackRecord>, keep: usize, rng: &mut ChaCha8Rng) -> Vec<AttackRecord> {
    let mut picked = sample(rng, records.len(), keep).into_vec();
    picked.sort_unstable();
    let mut records: Vec<Option<AttackRecord>> = records.into_iter().map(Some).collect();
    picked.into_iter().map(|i| records[i].take().unwrap()).collect()
}

pub fn attack_set_to_bytes(set: &AttackSet) -> Vec<u8> {
    let mut w = Writer::new(ATTACK_SET_MAGIC);
    w.u32(set.num_classes)
        .u32(set.pre_balance)
        .u32_list(&set.dropped);
    for bucket in &set.buckets {
        w.u32(bucket.len());
        for r in bucket {
            w.u8(r.member as u8).f64s(&r.posterior);
        }
    }
    w.finish()
}

pub fn attack_set_from_bytes(bytes: &[u8]) -> Result<AttackSet> {
    const WHAT: &str = "attack set";
    let mut r = Reader::open(bytes, ATTACK_SET_MAGIC, WHAT)?;
    let num_classes = r.u32()?;
    let pre_balance = r.u32()?;
    let dropped = r.u32_list()?;
    let mut buckets = Vec::with_capacity(num_classes.min(1 << 16));
    for _ in 0..num_classes {
        let n = r.u32()?;
        let mut bucket = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let member = match r.u8()? {
                0 => false,
                1 => true,
                other => {
                    return Err(Error::DescriptorMismatch {
                        what: WHAT,
                        detail: format!("membership byte {other}"),
                    })
                }
            };
            bucket.push(AttackRecord {
                posterior: r.f64s(num_classes)?,
                member,
            });
        }
        buckets.push(bucket);
    }
    r.finish()?;
    Ok(AttackSet {
        num_classes,
        buckets,
        dropped,
        pre_balance,
    })
}

pub fn save_attack_set(set: &AttackSet, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &attack_set_to_bytes(set))
}

pub fn load_attack_set(path: impl AsRef<Path>) -> Result<AttackSet> {
    attack_set_from_bytes(&read_file(path.as_ref())?)
}
