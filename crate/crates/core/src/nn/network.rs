use super::layer::{Cache, Layer};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::models::ArchId;

/// Ordered stack of layers producing raw logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    arch: ArchId,
    num_classes: usize,
    input_shape: Vec<usize>,
}

/// Addresses one scalar parameter: layer position, tensor within the layer
/// (0 = weight, 1 = bias), flat offset within that tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamIndex {
    pub layer: usize,
    pub tensor: usize,
    pub offset: usize,
}

/// Forward-pass record needed by [`Network::backward_trace`].
#[derive(Debug)]
pub struct Trace {
    caches: Vec<Cache>,
    logits_shape: Vec<usize>,
}

impl Network {
    /// Assembles a network and checks that the layer shapes chain from
    /// `input_shape` to `[num_classes]`.
    pub fn from_layers(
        arch: ArchId,
        input_shape: Vec<usize>,
        num_classes: usize,
        layers: Vec<Layer>,
    ) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::invalid("num_classes must be positive"));
        }
        let net = Network {
            layers,
            arch,
            num_classes,
            input_shape,
        };
        let shapes = net.shape_path()?;
        let out = shapes.last().expect("shape path includes the input");
        if out.as_slice() != [num_classes] {
            return Err(Error::Shape {
                layer: net.layers.len().saturating_sub(1),
                kind: net.layers.last().map_or("input", Layer::kind),
                detail: format!("final output {out:?} is not [{num_classes}] logits"),
            });
        }
        Ok(net)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn arch(&self) -> ArchId {
        self.arch
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.params())
            .map(Tensor::len)
            .sum()
    }

    /// Per-sample shapes: the input followed by each layer's output.
    pub fn shape_path(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = vec![self.input_shape.clone()];
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer
                .output_shape(shapes.last().unwrap())
                .map_err(|detail| Error::Shape {
                    layer: i,
                    kind: layer.kind(),
                    detail,
                })?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    fn check_batch(&self, batch: &Tensor) -> Result<()> {
        let s = batch.shape();
        if s.len() != self.input_shape.len() + 1 || s[1..] != self.input_shape[..] {
            return Err(Error::Shape {
                layer: 0,
                kind: self.layers.first().map_or("input", Layer::kind),
                detail: format!(
                    "batch shape {s:?} does not match [batch, {:?}]",
                    self.input_shape
                ),
            });
        }
        Ok(())
    }

    /// Raw logits `[batch, num_classes]`; no softmax is applied.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        self.check_batch(batch)?;
        let mut x = std::borrow::Cow::Borrowed(batch);
        for layer in &self.layers {
            let (y, _) = layer.forward(&x, false);
            x = std::borrow::Cow::Owned(y);
        }
        Ok(x.into_owned())
    }

    pub fn forward_trace(&self, batch: &Tensor) -> Result<(Tensor, Trace)> {
        self.check_batch(batch)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = batch.clone();
        for layer in &self.layers {
            let (y, cache) = layer.forward(&x, true);
            caches.push(cache.expect("cache requested"));
            x = y;
        }
        let logits_shape = x.shape().to_vec();
        Ok((x, Trace { caches, logits_shape }))
    }

    /// Gradients of `sum(logits * upstream)` w.r.t. every parameter.
    pub fn backward_trace(&self, trace: &Trace, upstream: &Tensor) -> Result<Gradients> {
        if upstream.shape() != trace.logits_shape.as_slice() {
            return Err(Error::Shape {
                layer: self.layers.len().saturating_sub(1),
                kind: self.layers.last().map_or("input", Layer::kind),
                detail: format!(
                    "upstream gradient {:?} does not match logits {:?}",
                    upstream.shape(),
                    trace.logits_shape
                ),
            });
        }
        // The first parameterized layer never needs an input gradient.
        let first_param = self.layers.iter().position(Layer::is_parameterized);
        let mut grads: Vec<Vec<Tensor>> = vec![Vec::new(); self.layers.len()];
        let mut dy = std::borrow::Cow::Borrowed(upstream);
        for i in (0..self.layers.len()).rev() {
            let need_dx = first_param.is_some_and(|f| i > f);
            let (pg, dx) = self.layers[i].backward(&trace.caches[i], &dy, need_dx);
            grads[i] = pg;
            match dx {
                Some(dx) => dy = std::borrow::Cow::Owned(dx),
                None => break,
            }
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.is_parameterized() && grads[i].is_empty() {
                grads[i] = layer.params().iter().map(|p| Tensor::zeros(p.shape())).collect();
            }
        }
        Ok(Gradients { layers: grads })
    }

    pub fn param(&self, idx: ParamIndex) -> Option<f64> {
        self.layers
            .get(idx.layer)?
            .params()
            .get(idx.tensor)?
            .data()
            .get(idx.offset)
            .copied()
    }

    pub fn set_param(&mut self, idx: ParamIndex, value: f64) -> Result<()> {
        let slot = self
            .layers
            .get_mut(idx.layer)
            .and_then(|l| l.params_mut().into_iter().nth(idx.tensor))
            .and_then(|t| t.data_mut().get_mut(idx.offset))
            .ok_or_else(|| Error::invalid(format!("no parameter at {idx:?}")))?;
        *slot = value;
        Ok(())
    }

    /// Maps a flat position in `0..param_count()` onto a [`ParamIndex`].
    pub fn locate(&self, mut flat: usize) -> Option<ParamIndex> {
        for (layer, l) in self.layers.iter().enumerate() {
            for (tensor, p) in l.params().iter().enumerate() {
                if flat < p.len() {
                    return Some(ParamIndex {
                        layer,
                        tensor,
                        offset: flat,
                    });
                }
                flat -= p.len();
            }
        }
        None
    }

    /// Equality on raw parameter bits plus identical structure.
    pub fn bit_eq(&self, other: &Network) -> bool {
        self.arch == other.arch
            && self.num_classes == other.num_classes
            && self.input_shape == other.input_shape
            && self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.kind() == b.kind() && {
                    let (pa, pb) = (a.params(), b.params());
                    pa.len() == pb.len() && pa.iter().zip(&pb).all(|(x, y)| x.bit_eq(y))
                }
            })
    }
}

/// Parameter gradients, one tensor list per layer (empty for parameterless
/// layers).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    layers: Vec<Vec<Tensor>>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients {
            layers: net
                .layers()
                .iter()
                .map(|l| l.params().iter().map(|p| Tensor::zeros(p.shape())).collect())
                .collect(),
        }
    }

    pub fn layers(&self) -> &[Vec<Tensor>] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Vec<Tensor>] {
        &mut self.layers
    }

    pub fn get(&self, idx: ParamIndex) -> Option<f64> {
        self.layers
            .get(idx.layer)?
            .get(idx.tensor)?
            .data()
            .get(idx.offset)
            .copied()
    }

    /// Checks that every tensor mirrors the matching parameter's shape.
    pub fn check_congruent(&self, net: &Network) -> Result<()> {
        if self.layers.len() != net.layers().len() {
            return Err(Error::invalid(format!(
                "gradient has {} layers, network has {}",
                self.layers.len(),
                net.layers().len()
            )));
        }
        for (i, (g, l)) in self.layers.iter().zip(net.layers()).enumerate() {
            let params = l.params();
            if g.len() != params.len()
                || g.iter().zip(&params).any(|(a, b)| a.shape() != b.shape())
            {
                return Err(Error::Shape {
                    layer: i,
                    kind: l.kind(),
                    detail: "gradient tensors do not mirror the layer parameters".into(),
                });
            }
        }
        Ok(())
    }

    pub fn iter_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flatten().flat_map(|t| t.data().iter().copied())
    }
}

impl Trace {
    /// ReLU on/off bits and max-pool winners of the recorded pass.
    pub(crate) fn switch_pattern(&self) -> Vec<u32> {
        let mut out = Vec::new();
        for c in &self.caches {
            match c {
                Cache::Relu { output } => out.extend(output.data().iter().map(|&v| u32::from(v > 0.0))),
                Cache::Pool { argmax, .. } => out.extend_from_slice(argmax),
                _ => {}
            }
        }
        out
    }
}

/// Raw logits of `net` on `batch`.
pub fn forward(net: &Network, batch: &Tensor) -> Result<Tensor> {
    net.forward(batch)
}

/// Analytic gradients of `sum(forward(net, batch) * upstream)`.
pub fn backward(net: &Network, batch: &Tensor, upstream: &Tensor) -> Result<Gradients> {
    let (_, trace) = net.forward_trace(batch)?;
    net.backward_trace(&trace, upstream)
}
