use serde::{Deserialize, Serialize};

use super::network::{Gradients, Network};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: 0.05,
            momentum: 0.9,
            batch_size: 64,
            epochs: 30,
            seed: 0,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self
    }
}

/// One momentum step: `v = momentum * v + g`, `theta = theta - lr * v`.
/// Returns the new network and velocity; the inputs are left untouched.
pub fn sgd_step(
    net: &Network,
    grads: &Gradients,
    cfg: &SgdConfig,
    velocity: &Gradients,
) -> Result<(Network, Gradients)> {
    cfg.validate()?;
    grads.check_congruent(net)?;
    velocity.check_congruent(net)?;
    let mut net = net.clone();
    let mut velocity = velocity.clone();
    sgd_step_in_place(&mut net, grads, cfg, &mut velocity);
    Ok((net, velocity))
}

/// In-place form used by the training loops; shapes must already agree.
pub(crate) fn sgd_step_in_place(
    net: &mut Network,
    grads: &Gradients,
    cfg: &SgdConfig,
    velocity: &mut Gradients,
) {
    let (lr, mu) = (cfg.learning_rate, cfg.momentum);
    for ((layer, g), v) in net
        .layers_mut()
        .iter_mut()
        .zip(grads.layers())
        .zip(velocity.layers_mut())
    {
        for ((p, g), v) in layer.params_mut().into_iter().zip(g).zip(v.iter_mut()) {
            for ((p, &g), v) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                *v = mu * *v + g;
                *p -= lr * *v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ArchId;
    use crate::nn::{Layer, Tensor};

    /// A 1-in 1-out dense net whose single weight is `w`.
    fn scalar_net(w: f64) -> Network {
        Network::from_layers(
            ArchId::Custom,
            vec![1],
            1,
            vec![Layer::Dense {
                weight: Tensor::new(vec![1, 1], vec![w]).unwrap(),
                bias: Tensor::zeros(&[1]),
            }],
        )
        .unwrap()
    }

    fn scalar_grad(net: &Network, g: f64) -> Gradients {
        let mut grads = Gradients::zeros_like(net);
        grads.layers_mut()[0][0].data_mut()[0] = g;
        grads
    }

    fn weight(net: &Network) -> f64 {
        net.layers()[0].params()[0].data()[0]
    }

    #[test]
    fn plain_step_arithmetic() {
        let net = scalar_net(1.0);
        let cfg = SgdConfig {
            learning_rate: 0.1,
            momentum: 0.0,
            ..SgdConfig::default()
        };
        let (next, _) = sgd_step(&net, &scalar_grad(&net, 1.0), &cfg, &Gradients::zeros_like(&net))
            .unwrap();
        assert!((weight(&next) - 0.9).abs() < 1e-15);
        assert_eq!(weight(&net), 1.0, "input network is not mutated");
    }

    #[test]
    fn zero_gradient_leaves_network_unchanged() {
        let net = scalar_net(0.37);
        let zero = Gradients::zeros_like(&net);
        let (next, _) = sgd_step(&net, &zero, &SgdConfig::default(), &zero).unwrap();
        assert!(next.bit_eq(&net));
    }

    #[test]
    fn two_momentum_steps_match_hand_arithmetic() {
        // theta0 = 1, lr = 0.1, mu = 0.9, g = 1 then g = 0.5:
        // v1 = 1,          theta1 = 1 - 0.1 = 0.9
        // v2 = 0.9 + 0.5,  theta2 = 0.9 - 0.14 = 0.76
        let cfg = SgdConfig {
            learning_rate: 0.1,
            momentum: 0.9,
            ..SgdConfig::default()
        };
        let net = scalar_net(1.0);
        let v0 = Gradients::zeros_like(&net);
        let (net, v1) = sgd_step(&net, &scalar_grad(&net, 1.0), &cfg, &v0).unwrap();
        let (net, v2) = sgd_step(&net, &scalar_grad(&net, 0.5), &cfg, &v1).unwrap();
        assert!((weight(&net) - 0.76).abs() < 1e-12);
        assert!((v2.layers()[0][0].data()[0] - 1.4).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_config_and_shapes() {
        let net = scalar_net(1.0);
        let g = Gradients::zeros_like(&net);
        let bad = SgdConfig {
            learning_rate: 0.0,
            ..SgdConfig::default()
        };
        assert!(sgd_step(&net, &g, &bad, &g).is_err());
        let other = crate::nn::init_network(ArchId::MlpTabular, &[4], 2, 0).unwrap();
        assert!(sgd_step(&net, &Gradients::zeros_like(&other), &SgdConfig::default(), &g).is_err());
    }
}
