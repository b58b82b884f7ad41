use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::{Layer, Network, Tensor};

/// Architecture registry identifiers. The string forms appear verbatim in
/// CLI flags and checkpoint headers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ArchId {
    Lenet5,
    ShadowNn,
    FcOnly,
    VggMini,
    MlpTabular,
    /// Per-class membership classifier over a posterior vector.
    AttackMlp,
    /// Hand-assembled network with no registry recipe; cannot be reloaded
    /// from a checkpoint.
    Custom,
}

impl ArchId {
    pub const REGISTRY: [ArchId; 6] = [
        ArchId::Lenet5,
        ArchId::ShadowNn,
        ArchId::FcOnly,
        ArchId::VggMini,
        ArchId::MlpTabular,
        ArchId::AttackMlp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ArchId::Lenet5 => "lenet5",
            ArchId::ShadowNn => "shadow-nn",
            ArchId::FcOnly => "fc-only",
            ArchId::VggMini => "vgg-mini",
            ArchId::MlpTabular => "mlp-tabular",
            ArchId::AttackMlp => "attack-mlp",
            ArchId::Custom => "custom",
        }
    }

    /// Whether the recipe starts with a convolution and so needs `[C, H, W]`.
    pub fn needs_image(self) -> bool {
        matches!(self, ArchId::Lenet5 | ArchId::ShadowNn | ArchId::VggMini)
    }
}

impl fmt::Display for ArchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArchId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ArchId::REGISTRY
            .into_iter()
            .chain([ArchId::Custom])
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::UnknownArch(s.to_string()))
    }
}

impl TryFrom<String> for ArchId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ArchId> for String {
    fn from(a: ArchId) -> String {
        a.as_str().to_string()
    }
}

enum Step {
    Conv(usize, usize),
    Pool,
    Flatten,
    Dense(usize),
    Relu,
}

fn recipe(arch: ArchId, num_classes: usize) -> Option<Vec<Step>> {
    use Step::*;
    let c = num_classes;
    Some(match arch {
        ArchId::Lenet5 => vec![
            Conv(6, 5), Relu, Pool,
            Conv(16, 5), Relu, Pool,
            Flatten,
            Dense(120), Relu,
            Dense(84), Relu,
            Dense(c),
        ],
        ArchId::ShadowNn => vec![
            Conv(8, 3), Relu, Pool,
            Conv(16, 3), Relu, Pool,
            Flatten,
            Dense(128), Relu,
            Dense(64), Relu,
            Dense(c),
        ],
        ArchId::FcOnly => vec![
            Flatten,
            Dense(32), Relu,
            Dense(32), Relu,
            Dense(c),
        ],
        ArchId::VggMini => vec![
            Conv(16, 3), Relu, Conv(16, 3), Relu, Pool,
            Conv(16, 3), Relu, Conv(16, 3), Relu, Pool,
            Flatten,
            Dense(128), Relu,
            Dense(c),
        ],
        ArchId::MlpTabular => vec![Dense(512), Relu, Dense(128), Relu, Dense(c)],
        ArchId::AttackMlp => vec![Dense(64), Relu, Dense(c)],
        ArchId::Custom => return None,
    })
}

/// Zero-initialised network following the registry recipe for `arch`.
pub fn skeleton(arch: ArchId, input_shape: &[usize], num_classes: usize) -> Result<Network> {
    let steps = recipe(arch, num_classes).ok_or_else(|| Error::UnknownArch(arch.to_string()))?;
    let incompatible = |reason: String| Error::IncompatibleArch {
        arch: arch.to_string(),
        input_shape: input_shape.to_vec(),
        reason,
    };
    if num_classes == 0 {
        return Err(incompatible("num_classes must be positive".into()));
    }
    if input_shape.is_empty() || input_shape.iter().any(|&d| d == 0) {
        return Err(incompatible("input dimensions must be positive".into()));
    }
    if arch.needs_image() && input_shape.len() != 3 {
        return Err(incompatible("convolutional recipes need [C, H, W] input".into()));
    }
    if !arch.needs_image() && arch != ArchId::FcOnly && input_shape.len() != 1 {
        return Err(incompatible("dense recipes need a flat [features] input".into()));
    }
    let mut shape = input_shape.to_vec();
    let mut layers = Vec::with_capacity(steps.len());
    for step in steps {
        let layer = match step {
            Step::Conv(out, k) => Layer::Conv2d {
                weight: Tensor::zeros(&[out, shape[0], k, k]),
                bias: Tensor::zeros(&[out]),
            },
            Step::Dense(out) => Layer::Dense {
                weight: Tensor::zeros(&[out, shape[0]]),
                bias: Tensor::zeros(&[out]),
            },
            Step::Pool => Layer::MaxPool2x2,
            Step::Flatten => Layer::Flatten,
            Step::Relu => Layer::Relu,
        };
        shape = layer.output_shape(&shape).map_err(incompatible)?;
        if shape.iter().any(|&d| d == 0) {
            return Err(incompatible(format!("{} shrinks the input to {shape:?}", layer.kind())));
        }
        layers.push(layer);
    }
    Network::from_layers(arch, input_shape.to_vec(), num_classes, layers)
}

/// Registry network with seeded fan-in-scaled uniform weights.
pub fn build_arch(
    arch: ArchId,
    input_shape: &[usize],
    num_classes: usize,
    seed: u64,
) -> Result<Network> {
    crate::nn::init_network(arch, input_shape, num_classes, seed)
}
