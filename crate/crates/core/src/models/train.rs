use serde::{Deserialize, Serialize};

use crate::data::{batches, Batch, Dataset};
use crate::error::{Error, Result};
use crate::losses::{argmax, cross_entropy_batch};
use crate::nn::{sgd_step_in_place, Gradients, Network, SgdConfig, Tensor};

const EVAL_CHUNK: usize = 500;

/// Per-epoch training record.
///
/// `train_accuracy` is measured on each mini-batch before its update and
/// averaged over the epoch. `eval_accuracy` is left empty when no
/// evaluation indices were given.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_accuracy: Vec<f64>,
    pub eval_accuracy: Vec<f64>,
    pub mean_loss: Vec<f64>,
}

impl TrainHistory {
    pub fn epochs(&self) -> usize {
        self.mean_loss.len()
    }
}

/// Trains on mean cross-entropy with momentum SGD.
pub fn train_classifier(
    net: Network,
    ds: &Dataset,
    train_idx: &[usize],
    eval_idx: &[usize],
    cfg: &SgdConfig,
) -> Result<(Network, TrainHistory)> {
    train_classifier_with_hook(net, ds, train_idx, eval_idx, cfg, |_, _| Ok(()))
}

/// [`train_classifier`] that calls `hook(epoch, net)` after every epoch,
/// with `epoch` counted from 1.
pub fn train_classifier_with_hook<H>(
    net: Network,
    ds: &Dataset,
    train_idx: &[usize],
    eval_idx: &[usize],
    cfg: &SgdConfig,
    hook: H,
) -> Result<(Network, TrainHistory)>
where
    H: FnMut(usize, &Network) -> Result<()>,
{
    fit(net, ds, train_idx, eval_idx, cfg, hook, |batch, logits| {
        cross_entropy_batch(logits, &batch.labels)
    })
}

/// Generic mini-batch loop. `objective(batch, logits)` returns the batch
/// loss and its gradient w.r.t. the logits.
///
/// Epoch `e` (from 0) shuffles with seed `cfg.seed + e`.
pub fn fit<H, O>(
    mut net: Network,
    ds: &Dataset,
    train_idx: &[usize],
    eval_idx: &[usize],
    cfg: &SgdConfig,
    mut hook: H,
    mut objective: O,
) -> Result<(Network, TrainHistory)>
where
    H: FnMut(usize, &Network) -> Result<()>,
    O: FnMut(&Batch, &Tensor) -> Result<(f64, Tensor)>,
{
    cfg.validate()?;
    check_compatible(&net, ds)?;
    if cfg.epochs > 0 && train_idx.is_empty() {
        return Err(Error::invalid("training index set is empty"));
    }
    let mut history = TrainHistory::default();
    let mut velocity = Gradients::zeros_like(&net);
    for epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut seen = 0usize;
        for batch in batches(ds, train_idx, cfg.batch_size, Some(cfg.seed.wrapping_add(epoch as u64)))? {
            let (logits, trace) = net.forward_trace(&batch.features)?;
            correct += count_correct(&logits, &batch.labels);
            let (loss, upstream) = objective(&batch, &logits)?;
            if !loss.is_finite() {
                return Err(Error::invalid(format!("loss diverged in epoch {}", epoch + 1)));
            }
            let grads = net.backward_trace(&trace, &upstream)?;
            sgd_step_in_place(&mut net, &grads, cfg, &mut velocity);
            loss_sum += loss * batch.labels.len() as f64;
            seen += batch.labels.len();
        }
        history.mean_loss.push(loss_sum / seen as f64);
        history.train_accuracy.push(correct as f64 / seen as f64);
        if !eval_idx.is_empty() {
            history.eval_accuracy.push(accuracy(&net, ds, eval_idx)?);
        }
        log::debug!(
            "epoch {}/{}: loss {:.4}, train acc {:.4}",
            epoch + 1,
            cfg.epochs,
            history.mean_loss[epoch],
            history.train_accuracy[epoch]
        );
        hook(epoch + 1, &net)?;
    }
    Ok((net, history))
}

fn check_compatible(net: &Network, ds: &Dataset) -> Result<()> {
    if ds.sample_shape() != net.input_shape() {
        return Err(Error::invalid(format!(
            "dataset samples {:?} do not fit network input {:?}",
            ds.sample_shape(),
            net.input_shape()
        )));
    }
    if ds.num_classes() != net.num_classes() {
        return Err(Error::invalid(format!(
            "dataset has {} classes, network {}",
            ds.num_classes(),
            net.num_classes()
        )));
    }
    Ok(())
}

fn count_correct(logits: &Tensor, labels: &[usize]) -> usize {
    logits
        .rows_iter()
        .zip(labels)
        .filter(|(z, &y)| argmax(z) == y)
        .count()
}

/// Logits for `idx`, computed in chunks to bound memory.
pub fn predict_logits(net: &Network, ds: &Dataset, idx: &[usize]) -> Result<Tensor> {
    let c = net.num_classes();
    let mut out = Vec::with_capacity(idx.len() * c);
    for chunk in idx.chunks(EVAL_CHUNK) {
        let (x, _) = ds.gather(chunk);
        out.extend_from_slice(net.forward(&x)?.data());
    }
    Tensor::new(vec![idx.len(), c], out)
}

/// Fraction of `idx` whose argmax logit equals the label.
pub fn accuracy(net: &Network, ds: &Dataset, idx: &[usize]) -> Result<f64> {
    if idx.is_empty() {
        return Err(Error::invalid("accuracy over an empty index set"));
    }
    let mut correct = 0;
    for chunk in idx.chunks(EVAL_CHUNK) {
        let (x, y) = ds.gather(chunk);
        correct += count_correct(&net.forward(&x)?, &y);
    }
    Ok(correct as f64 / idx.len() as f64)
}

/// Train accuracy minus test accuracy.
pub fn overfitting_level(
    net: &Network,
    ds: &Dataset,
    train_idx: &[usize],
    test_idx: &[usize],
) -> Result<f64> {
    Ok(accuracy(net, ds, train_idx)? - accuracy(net, ds, test_idx)?)
}
