use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::nn::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub target_train_size: usize,
    pub shadow_train_size: usize,
    pub test_size: usize,
    pub seed: u64,
}

/// Pairwise disjoint index sets into one [`Dataset`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub target_train: Vec<usize>,
    pub shadow_train: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    /// First half of `test`: non-members for the attack training set.
    pub fn shadow_out(&self) -> &[usize] {
        &self.test[..self.test.len() / 2]
    }

    /// Second half of `test`: non-members for evaluating the attack.
    pub fn eval_out(&self) -> &[usize] {
        &self.test[self.test.len() / 2..]
    }

    pub fn check_disjoint(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self
            .target_train
            .iter()
            .chain(&self.shadow_train)
            .chain(&self.test)
        {
            if i >= n {
                return Err(Error::invalid(format!("index {i} out of bounds for {n} examples")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::invalid(format!("index {i} appears in two splits")));
            }
        }
        Ok(())
    }
}

/// Random stratified partition into target-train, shadow-train and test.
///
/// Every class is spread evenly over a single permutation of the data (each
/// class member gets a jittered rank `(j + u_c) / n_c`), and the three splits
/// are consecutive runs of that permutation. Any run therefore matches the
/// overall class proportions to within about one example per class.
pub fn split_disjoint(ds: &Dataset, spec: &SplitSpec) -> Result<SplitIndices> {
    let sizes = [spec.target_train_size, spec.shadow_train_size, spec.test_size];
    if sizes.iter().any(|&s| s == 0) {
        return Err(Error::InfeasibleSplit("split sizes must be positive".into()));
    }
    let total: usize = sizes.iter().sum();
    if total > ds.len() {
        return Err(Error::InfeasibleSplit(format!(
            "splits need {total} examples but the dataset has {}",
            ds.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.num_classes()];
    for (i, &l) in ds.labels().iter().enumerate() {
        by_class[l].push(i);
    }
    let mut keyed: Vec<(f64, u64, usize)> = Vec::with_capacity(ds.len());
    for members in &mut by_class {
        members.shuffle(&mut rng);
        let offset: f64 = rng.random();
        let n = members.len() as f64;
        for (j, &idx) in members.iter().enumerate() {
            keyed.push(((j as f64 + offset) / n, rng.random(), idx));
        }
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let order: Vec<usize> = keyed.into_iter().map(|(_, _, i)| i).collect();
    let (a, rest) = order.split_at(sizes[0]);
    let (b, rest) = rest.split_at(sizes[1]);
    let c = &rest[..sizes[2]];
    Ok(SplitIndices {
        target_train: a.to_vec(),
        shadow_train: b.to_vec(),
        test: c.to_vec(),
    })
}

/// `indices` without the examples labeled `class_id`, order preserved.
pub fn remove_class(ds: &Dataset, indices: &[usize], class_id: usize) -> Vec<usize> {
    indices
        .iter()
        .copied()
        .filter(|&i| ds.labels()[i] != class_id)
        .collect()
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub indices: Vec<usize>,
}

/// Iterator over mini-batches; see [`batches`].
pub struct Batches<'a> {
    ds: &'a Dataset,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl Iterator for Batches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let indices = self.order[self.pos..end].to_vec();
        self.pos = end;
        let (features, labels) = self.ds.gather(&indices);
        Some(Batch {
            features,
            labels,
            indices,
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.order.len() - self.pos).div_ceil(self.batch_size);
        (left, Some(left))
    }
}

impl ExactSizeIterator for Batches<'_> {}

/// One epoch of mini-batches covering every index exactly once. With a
/// shuffle seed the order is a seeded permutation, otherwise it is the
/// given order.
pub fn batches<'a>(
    ds: &'a Dataset,
    indices: &[usize],
    batch_size: usize,
    shuffle_seed: Option<u64>,
) -> Result<Batches<'a>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch_size must be at least 1"));
    }
    let mut order = indices.to_vec();
    if let Some(seed) = shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    Ok(Batches {
        ds,
        order,
        batch_size,
        pos: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_synthetic_tabular;

    fn small() -> Dataset {
        gen_synthetic_tabular(500, 8, 5, 1)
    }

    #[test]
    fn sizes_and_disjointness() {
        let ds = small();
        let spec = SplitSpec {
            target_train_size: 100,
            shadow_train_size: 200,
            test_size: 150,
            seed: 3,
        };
        let s = split_disjoint(&ds, &spec).unwrap();
        assert_eq!(
            (s.target_train.len(), s.shadow_train.len(), s.test.len()),
            (100, 200, 150)
        );
        s.check_disjoint(ds.len()).unwrap();
    }

    #[test]
    fn full_cover_uses_every_index() {
        let ds = small();
        let spec = SplitSpec {
            target_train_size: 100,
            shadow_train_size: 300,
            test_size: 100,
            seed: 9,
        };
        let s = split_disjoint(&ds, &spec).unwrap();
        let mut all: Vec<usize> = s
            .target_train
            .iter()
            .chain(&s.shadow_train)
            .chain(&s.test)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..500).collect::<Vec<_>>());
    }

    #[test]
    fn infeasible_rejected() {
        let ds = small();
        let spec = SplitSpec {
            target_train_size: 300,
            shadow_train_size: 300,
            test_size: 1,
            seed: 0,
        };
        assert!(matches!(split_disjoint(&ds, &spec), Err(Error::InfeasibleSplit(_))));
    }

    #[test]
    fn remove_class_filters_and_conserves() {
        let ds = small();
        let idx: Vec<usize> = (0..ds.len()).collect();
        let kept = remove_class(&ds, &idx, 2);
        assert!(kept.iter().all(|&i| ds.labels()[i] != 2));
        assert_eq!(idx.len(), kept.len() + ds.class_counts(&idx)[2]);
        let no_twos: Vec<usize> = kept.clone();
        assert_eq!(remove_class(&ds, &no_twos, 2), no_twos);
    }

    #[test]
    fn batches_cover_each_index_once() {
        let ds = small();
        let idx: Vec<usize> = (10..110).collect();
        let single: Vec<Batch> = batches(&ds, &idx, 1000, Some(1)).unwrap().collect();
        assert_eq!(single.len(), 1);

        let a: Vec<usize> = batches(&ds, &idx, 7, Some(1))
            .unwrap()
            .flat_map(|b| b.indices)
            .collect();
        let b: Vec<usize> = batches(&ds, &idx, 7, Some(2))
            .unwrap()
            .flat_map(|b| b.indices)
            .collect();
        assert_ne!(a, b);
        let (mut sa, mut sb) = (a.clone(), b.clone());
        sa.sort_unstable();
        sb.sort_unstable();
        assert_eq!(sa, idx);
        assert_eq!(sb, idx);

        let mut labels: Vec<usize> = batches(&ds, &idx, 7, Some(1))
            .unwrap()
            .flat_map(|b| b.labels)
            .collect();
        let mut expected: Vec<usize> = idx.iter().map(|&i| ds.labels()[i]).collect();
        labels.sort_unstable();
        expected.sort_unstable();
        assert_eq!(labels, expected);
    }
}
