use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Per-bit flip probability used unless a spec overrides it.
pub const DEFAULT_FLIP_PROB: f64 = 0.15;

/// Binary tabular data drawn around random class prototypes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub name: String,
    pub n: usize,
    pub n_features: usize,
    pub num_classes: usize,
    pub flip_prob: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(n: usize, n_features: usize, num_classes: usize, seed: u64) -> Self {
        SyntheticSpec {
            name: "synthetic".into(),
            n,
            n_features,
            num_classes,
            flip_prob: DEFAULT_FLIP_PROB,
            seed,
        }
    }

    /// Shape of the processed Purchase100 records.
    pub fn purchase_like(seed: u64) -> Self {
        SyntheticSpec {
            name: "purchase-like".into(),
            ..SyntheticSpec::new(19_324, 600, 100, seed)
        }
    }

    /// Texas100 record count and classes; the feature count is cut from
    /// 6170 to 617 for desk-scale runs.
    pub fn texas_like(seed: u64) -> Self {
        SyntheticSpec {
            name: "texas-like".into(),
            ..SyntheticSpec::new(67_330, 617, 100, seed)
        }
    }

    pub fn preset(name: &str, seed: u64) -> Option<Self> {
        match name {
            "purchase-like" => Some(Self::purchase_like(seed)),
            "texas-like" => Some(Self::texas_like(seed)),
            _ => None,
        }
    }

    pub fn with_flip_prob(mut self, p: f64) -> Self {
        self.flip_prob = p;
        self
    }
}

/// Purchase/Texas-style binary data with the default flip probability.
pub fn gen_synthetic_tabular(n: usize, n_features: usize, num_classes: usize, seed: u64) -> Dataset {
    gen_synthetic(&SyntheticSpec::new(n, n_features, num_classes, seed))
        .expect("default synthetic spec is valid for positive sizes")
}

/// Draws one random binary prototype per class, then each example copies a
/// uniformly chosen prototype and flips every bit with `flip_prob`. The
/// label is the prototype id.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.n == 0 || spec.n_features == 0 || spec.num_classes == 0 {
        return Err(Error::invalid("synthetic sizes must be positive"));
    }
    if !(0.0..=1.0).contains(&spec.flip_prob) {
        return Err(Error::invalid("flip_prob must lie in [0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.n_features;
    let prototypes: Vec<bool> = (0..spec.num_classes * d).map(|_| rng.random()).collect();
    let mut data = Vec::with_capacity(spec.n * d);
    let mut labels = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let c = rng.random_range(0..spec.num_classes);
        labels.push(c);
        for &bit in &prototypes[c * d..(c + 1) * d] {
            let flip = spec.flip_prob > 0.0 && rng.random_bool(spec.flip_prob);
            data.push(if bit != flip { 1.0 } else { 0.0 });
        }
    }
    Dataset::new(
        spec.name.clone(),
        Tensor::new(vec![spec.n, d], data)?,
        labels,
        spec.num_classes,
    )
}

/// Noiseless toy set: record `i` is the indicator vector of feature `i`,
/// labeled `i mod num_classes`. Records share no features, so a model fits
/// its training records without generalizing to any other.
pub fn gen_indicator_toy(n: usize, num_classes: usize) -> Result<Dataset> {
    if n == 0 || num_classes == 0 {
        return Err(Error::invalid("toy sizes must be positive"));
    }
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        data[i * n + i] = 1.0;
    }
    let labels = (0..n).map(|i| i % num_classes).collect();
    Dataset::new("toy", Tensor::new(vec![n, n], data)?, labels, num_classes)
}
