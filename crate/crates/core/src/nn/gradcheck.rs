use super::network::{Network, ParamIndex};
use super::tensor::Tensor;
use crate::error::Result;

/// Step used by [`finite_difference_grad`].
pub const FD_STEP: f64 = 1e-5;

/// Central difference `(L(theta + h) - L(theta - h)) / 2h` of a scalar loss
/// of the logits with respect to one parameter.
pub fn finite_difference_grad<F>(
    net: &Network,
    loss_fn: F,
    batch: &Tensor,
    idx: ParamIndex,
) -> Result<f64>
where
    F: Fn(&Tensor) -> f64,
{
    let mut probe = net.clone();
    let theta = net
        .param(idx)
        .ok_or_else(|| crate::Error::invalid(format!("no parameter at {idx:?}")))?;
    probe.set_param(idx, theta + FD_STEP)?;
    let plus = loss_fn(&probe.forward(batch)?);
    probe.set_param(idx, theta - FD_STEP)?;
    let minus = loss_fn(&probe.forward(batch)?);
    Ok((plus - minus) / (2.0 * FD_STEP))
}

/// Whether every ReLU and max-pool keeps its branch over the stencil
/// `theta - h ..= theta + h` of [`finite_difference_grad`]. Where a branch
/// flips, the loss has a kink inside the stencil and the central difference
/// is not a derivative estimate.
pub fn stencil_is_smooth(net: &Network, batch: &Tensor, idx: ParamIndex) -> Result<bool> {
    let theta = net
        .param(idx)
        .ok_or_else(|| crate::Error::invalid(format!("no parameter at {idx:?}")))?;
    let base = net.forward_trace(batch)?.1.switch_pattern();
    let mut probe = net.clone();
    for v in [theta + FD_STEP, theta - FD_STEP] {
        probe.set_param(idx, v)?;
        if probe.forward_trace(batch)?.1.switch_pattern() != base {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `|a - b| <= rel * max(|a|, |b|)` or within the absolute floor.
pub fn grads_agree(a: f64, b: f64, rel: f64, abs_floor: f64) -> bool {
    let diff = (a - b).abs();
    diff <= abs_floor || diff <= rel * a.abs().max(b.abs())
}
