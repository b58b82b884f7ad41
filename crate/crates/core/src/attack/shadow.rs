use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses::{distill_loss_batch, DistillConfig};
use crate::models::{build_arch, fit, train_classifier, ArchId, TeacherOracle, TrainHistory};
use crate::nn::{Network, SgdConfig};

/// Distills a fresh `shadow_arch` network from the oracle's logits on
/// `shadow_idx`. The shadow is initialized from `sgd.seed`.
///
/// Every mini-batch issues exactly one oracle query, so a run costs
/// `epochs * ceil(|shadow_idx| / batch_size)` queries. Ground-truth labels
/// feed the cross-entropy term.
pub fn distill_shadow(
    oracle: &TeacherOracle,
    shadow_arch: ArchId,
    ds: &Dataset,
    shadow_idx: &[usize],
    eval_idx: &[usize],
    cfg: &DistillConfig,
    sgd: &SgdConfig,
) -> Result<(Network, TrainHistory)> {
    cfg.validate()?;
    if ds.sample_shape() != oracle.input_shape() || ds.num_classes() != oracle.num_classes() {
        return Err(Error::invalid(format!(
            "dataset {:?} x {} classes does not match the oracle's {:?} x {}",
            ds.sample_shape(),
            ds.num_classes(),
            oracle.input_shape(),
            oracle.num_classes()
        )));
    }
    let net = build_arch(shadow_arch, oracle.input_shape(), oracle.num_classes(), sgd.seed)?;
    fit(net, ds, shadow_idx, eval_idx, sgd, |_, _| Ok(()), |batch, logits| {
        let teacher = oracle.query(&batch.features)?;
        distill_loss_batch(&teacher, logits, Some(&batch.labels), cfg)
    })
}

/// Baseline shadow fitted to the ground-truth labels alone; it never
/// consults the target.
pub fn label_trained_shadow(
    shadow_arch: ArchId,
    ds: &Dataset,
    shadow_idx: &[usize],
    eval_idx: &[usize],
    sgd: &SgdConfig,
) -> Result<(Network, TrainHistory)> {
    let net = build_arch(shadow_arch, ds.sample_shape(), ds.num_classes(), sgd.seed)?;
    train_classifier(net, ds, shadow_idx, eval_idx, sgd)
}
