//! Minimal CPU neural-network engine with hand-written backward rules.

mod checkpoint;
mod gradcheck;
mod init;
mod layer;
mod network;
mod sgd;
mod tensor;

pub use checkpoint::{
    load_network, network_from_bytes, network_to_bytes, save_network, CHECKPOINT_MAGIC,
};
pub use gradcheck::{finite_difference_grad, grads_agree, stencil_is_smooth, FD_STEP};
pub use init::init_network;
pub use layer::Layer;
pub use network::{backward, forward, Gradients, Network, ParamIndex, Trace};
pub(crate) use sgd::sgd_step_in_place;
pub use sgd::{sgd_step, SgdConfig};
pub use tensor::Tensor;
