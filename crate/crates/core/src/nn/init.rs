use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::network::Network;
use crate::error::Result;
use crate::models::{self, ArchId};

/// Builds the registry recipe for `arch` and draws its weights from
/// `U(-sqrt(1/fan_in), sqrt(1/fan_in))`; biases start at zero.
pub fn init_network(
    arch: ArchId,
    input_shape: &[usize],
    num_classes: usize,
    seed: u64,
) -> Result<Network> {
    let mut net = models::skeleton(arch, input_shape, num_classes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in net.layers_mut() {
        let Some(fan_in) = layer.fan_in() else {
            continue;
        };
        let bound = (1.0 / fan_in as f64).sqrt();
        let mut params = layer.params_mut();
        for w in params[0].data_mut() {
            *w = rng.random_range(-bound..bound);
        }
        params[1].data_mut().fill(0.0);
    }
    Ok(net)
}
