//! Datasets, disjoint splits and batching.

mod container;
mod idx;
mod split;
mod synthetic;

pub use container::{
    dataset_from_bytes, dataset_to_bytes, load_dataset, load_splits, save_dataset, save_splits,
    splits_from_bytes, splits_to_bytes, DATASET_MAGIC, SPLIT_MAGIC,
};
pub use idx::{
    encode_idx_images, encode_idx_labels, load_mnist_dir, load_mnist_idx, parse_idx_images,
    parse_idx_labels, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC,
};
pub use split::{batches, remove_class, split_disjoint, Batch, Batches, SplitIndices, SplitSpec};
pub use synthetic::{gen_indicator_toy, gen_synthetic, gen_synthetic_tabular, SyntheticSpec, DEFAULT_FLIP_PROB};

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Labeled examples. Features are batch-major: `[n, ...sample shape]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
    name: String,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        features: Tensor,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("dataset must hold at least one example"));
        }
        if features.rank() < 2 || features.rows() != labels.len() {
            return Err(Error::invalid(format!(
                "features {:?} do not match {} labels",
                features.shape(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::invalid(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        if !features.all_finite() {
            return Err(Error::invalid("features must be finite"));
        }
        Ok(Dataset {
            features,
            labels,
            num_classes,
            name: name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Per-example shape, e.g. `[1, 28, 28]`.
    pub fn sample_shape(&self) -> &[usize] {
        &self.features.shape()[1..]
    }

    /// Features and labels of the selected examples, in the given order.
    pub fn gather(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let x = self.features.gather_rows(indices);
        let y = indices.iter().map(|&i| self.labels[i]).collect();
        (x, y)
    }

    pub fn class_counts(&self, indices: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &i in indices {
            counts[self.labels[i]] += 1;
        }
        counts
    }

    /// Concatenates two datasets with identical sample shape and classes.
    pub fn concat(self, other: Dataset, name: impl Into<String>) -> Result<Dataset> {
        if self.sample_shape() != other.sample_shape() || self.num_classes != other.num_classes {
            return Err(Error::invalid("datasets differ in sample shape or classes"));
        }
        let mut shape = self.features.shape().to_vec();
        shape[0] += other.len();
        let mut data = self.features.into_data();
        data.extend_from_slice(other.features.data());
        let mut labels = self.labels;
        labels.extend_from_slice(&other.labels);
        Dataset::new(name, Tensor::new(shape, data)?, labels, self.num_classes)
    }
}
