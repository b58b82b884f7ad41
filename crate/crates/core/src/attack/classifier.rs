use std::path::Path;

use serde::{Deserialize, Serialize};

use super::attack_set::{AttackRecord, AttackSet};
use crate::codec::{read_file, write_file, Reader, Writer};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses::{argmax, PROB_FLOOR};
use crate::models::{build_arch, train_classifier, ArchId};
use crate::nn::{network_from_bytes, network_to_bytes, Network, SgdConfig, Tensor};

pub const ATTACK_MODEL_MAGIC: &[u8; 8] = b"LLATCK1\0";

/// How a posterior vector is presented to the attack classifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Encoding {
    Probability,
    /// Natural log of each entry, floored at the probability clamp.
    LogProbability,
}

impl std::str::FromStr for Encoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "probability" => Ok(Encoding::Probability),
            "log-probability" => Ok(Encoding::LogProbability),
            other => Err(Error::invalid(format!("unknown attack encoding `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub sgd: SgdConfig,
    pub encoding: Encoding,
    /// Sort posteriors in descending order before encoding.
    pub sort: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            sgd: SgdConfig {
                learning_rate: 0.01,
                momentum: 0.9,
                batch_size: 32,
                epochs: 30,
                seed: 0,
            },
            encoding: Encoding::LogProbability,
            sort: true,
        }
    }
}

/// One membership classifier with the feature standardization it was
/// trained under.
#[derive(Debug, Clone, PartialEq)]
struct Scorer {
    net: Network,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

/// Per-class membership classifiers plus a fallback trained on the union
/// of every bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackModel {
    num_classes: usize,
    encoding: Encoding,
    sort: bool,
    per_class: Vec<Option<Scorer>>,
    fallback: Scorer,
}

/// A single membership decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    pub member: bool,
    /// Member logit minus non-member logit.
    pub margin: f64,
    pub used_fallback: bool,
}

fn encode(posterior: &[f64], encoding: Encoding, sort: bool) -> Vec<f64> {
    let mut v = posterior.to_vec();
    if sort {
        v.sort_by(|a, b| b.total_cmp(a));
    }
    if encoding == Encoding::LogProbability {
        v.iter_mut().for_each(|p| *p = p.max(PROB_FLOOR).ln());
    }
    v
}

impl AttackModel {
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn encoding(&self) -> Encoding {
        self.encoding
    }

    pub fn has_class_model(&self, class: usize) -> bool {
        self.per_class.get(class).is_some_and(Option::is_some)
    }

    /// Scores a batch of posteriors routed by their ground-truth classes.
    pub fn predict(&self, posteriors: &Tensor, classes: &[usize]) -> Result<Vec<Verdict>> {
        if posteriors.shape() != [classes.len(), self.num_classes] {
            return Err(Error::invalid(format!(
                "posteriors {:?} for {} records over {} classes",
                posteriors.shape(),
                classes.len(),
                self.num_classes
            )));
        }
        let mut out = Vec::with_capacity(classes.len());
        for (p, &c) in posteriors.rows_iter().zip(classes) {
            let own = self.per_class.get(c).and_then(Option::as_ref);
            let scorer = own.unwrap_or(&self.fallback);
            let mut x = encode(p, self.encoding, self.sort);
            for ((v, m), s) in x.iter_mut().zip(&scorer.mean).zip(&scorer.scale) {
                *v = (*v - m) / s;
            }
            let logits = scorer.net.forward(&Tensor::new(vec![1, self.num_classes], x)?)?;
            let z = logits.data();
            out.push(Verdict {
                member: argmax(z) == 1,
                margin: z[1] - z[0],
                used_fallback: own.is_none(),
            });
        }
        Ok(out)
    }
}

fn train_scorer(
    records: &[&AttackRecord],
    num_classes: usize,
    cfg: &AttackConfig,
    seed: u64,
) -> Result<Scorer> {
    let rows: Vec<Vec<f64>> = records
        .iter()
        .map(|r| encode(&r.posterior, cfg.encoding, cfg.sort))
        .collect();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; num_classes];
    for r in &rows {
        mean.iter_mut().zip(r).for_each(|(m, v)| *m += v / n);
    }
    let mut scale = vec![0.0; num_classes];
    for r in &rows {
        scale
            .iter_mut()
            .zip(r)
            .zip(&mean)
            .for_each(|((s, v), m)| *s += (v - m) * (v - m) / n);
    }
    scale
        .iter_mut()
        .for_each(|s| *s = if *s > 1e-12 { s.sqrt() } else { 1.0 });
    let data: Vec<f64> = rows
        .iter()
        .flat_map(|r| r.iter().zip(&mean).zip(&scale).map(|((v, m), s)| (v - m) / s))
        .collect();
    let labels = records.iter().map(|r| r.member as usize).collect();
    let ds = Dataset::new(
        "attack",
        Tensor::new(vec![records.len(), num_classes], data)?,
        labels,
        2,
    )?;
    let net = build_arch(ArchId::AttackMlp, &[num_classes], 2, seed)?;
    let idx: Vec<usize> = (0..ds.len()).collect();
    let sgd = cfg.sgd.with_seed(seed);
    let (net, _) = train_classifier(net, &ds, &idx, &[], &sgd)?;
    Ok(Scorer { net, mean, scale })
}

/// Trains one classifier per nonempty bucket, plus the fallback.
pub fn train_attack_models(aset: &AttackSet, cfg: &AttackConfig) -> Result<AttackModel> {
    if aset.is_empty() {
        return Err(Error::invalid("attack set has no records"));
    }
    let c = aset.num_classes();
    let base = cfg.sgd.seed;
    let mut per_class = Vec::with_capacity(c);
    for class in 0..c {
        let bucket: Vec<&AttackRecord> = aset.bucket(class).iter().collect();
        per_class.push(if bucket.is_empty() {
            None
        } else {
            Some(train_scorer(&bucket, c, cfg, base.wrapping_add(class as u64 + 1))?)
        });
    }
    let union: Vec<&AttackRecord> = aset.buckets().iter().flatten().collect();
    let fallback = train_scorer(&union, c, cfg, base)?;
    Ok(AttackModel {
        num_classes: c,
        encoding: cfg.encoding,
        sort: cfg.sort,
        per_class,
        fallback,
    })
}

fn write_scorer(w: &mut Writer, s: &Scorer) {
    w.f64s(&s.mean).f64s(&s.scale).bytes(&network_to_bytes(&s.net));
}

fn read_scorer(r: &mut Reader<'_>, c: usize) -> Result<Scorer> {
    let mean = r.f64s(c)?;
    let scale = r.f64s(c)?;
    let net = network_from_bytes(r.bytes()?)?;
    if net.input_shape() != [c] || net.num_classes() != 2 {
        return Err(Error::DescriptorMismatch {
            what: "attack model",
            detail: format!("scorer network expects {:?}", net.input_shape()),
        });
    }
    Ok(Scorer { net, mean, scale })
}

pub fn attack_model_to_bytes(m: &AttackModel) -> Vec<u8> {
    let mut w = Writer::new(ATTACK_MODEL_MAGIC);
    w.u32(m.num_classes)
        .u8(match m.encoding {
            Encoding::Probability => 0,
            Encoding::LogProbability => 1,
        })
        .u8(m.sort as u8);
    for s in &m.per_class {
        match s {
            Some(s) => {
                w.u8(1);
                write_scorer(&mut w, s);
            }
            None => {
                w.u8(0);
            }
        }
    }
    write_scorer(&mut w, &m.fallback);
    w.finish()
}

pub fn attack_model_from_bytes(bytes: &[u8]) -> Result<AttackModel> {
    const WHAT: &str = "attack model";
    let bad = |detail: String| Error::DescriptorMismatch { what: WHAT, detail };
    let mut r = Reader::open(bytes, ATTACK_MODEL_MAGIC, WHAT)?;
    let c = r.u32()?;
    let encoding = match r.u8()? {
        0 => Encoding::Probability,
        1 => Encoding::LogProbability,
        e => return Err(bad(format!("encoding tag {e}"))),
    };
    let sort = match r.u8()? {
        0 => false,
        1 => true,
        s => return Err(bad(format!("sort flag {s}"))),
    };
    let mut per_class = Vec::with_capacity(c.min(1 << 16));
    for _ in 0..c {
        per_class.push(match r.u8()? {
            0 => None,
            1 => Some(read_scorer(&mut r, c)?),
            t => return Err(bad(format!("presence tag {t}"))),
        });
    }
    let fallback = read_scorer(&mut r, c)?;
    r.finish()?;
    Ok(AttackModel {
        num_classes: c,
        encoding,
        sort,
        per_class,
        fallback,
    })
}

pub fn save_attack_model(m: &AttackModel, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &attack_model_to_bytes(m))
}

pub fn load_attack_model(path: impl AsRef<Path>) -> Result<AttackModel> {
    attack_model_from_bytes(&read_file(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorting_and_log_encoding() {
        let p = [0.2, 0.7, 0.1];
        assert_eq!(encode(&p, Encoding::Probability, true), vec![0.7, 0.2, 0.1]);
        assert_eq!(encode(&p, Encoding::Probability, false), p.to_vec());
        let l = encode(&[1.0, 0.0], Encoding::LogProbability, true);
        assert_eq!(l[0], 0.0);
        assert_eq!(l[1], PROB_FLOOR.ln());
    }

    #[test]
    fn encoding_names_parse() {
        assert_eq!("log-probability".parse::<Encoding>().unwrap(), Encoding::LogProbability);
        assert!("logits".parse::<Encoding>().is_err());
    }
}
