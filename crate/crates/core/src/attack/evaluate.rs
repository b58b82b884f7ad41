use super::classifier::AttackModel;
use super::metrics::Confusion;
use super::report::AttackReport;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses::softmax_rows;
use crate::models::TeacherOracle;

const QUERY_CHUNK: usize = 500;

/// Queries the target for every record, routes its posterior to the attack
/// model of the record's ground-truth class and counts the verdicts.
pub fn evaluate_attack(
    models: &AttackModel,
    target: &TeacherOracle,
    ds: &Dataset,
    member_idx: &[usize],
    nonmember_idx: &[usize],
) -> Result<AttackReport> {
    let c = ds.num_classes();
    if models.num_classes() != c || target.num_classes() != c {
        return Err(Error::invalid("attack model, oracle and dataset disagree on classes"));
    }
    let mut is_member = vec![false; ds.len()];
    member_idx.iter().for_each(|&i| is_member[i] = true);
    if nonmember_idx.iter().any(|&i| is_member[i]) {
        return Err(Error::invalid("member and non-member indices overlap"));
    }
    let before = target.query_count();
    let mut counts = vec![Confusion::default(); c];
    for (idx, member) in [(member_idx, true), (nonmember_idx, false)] {
        for chunk in idx.chunks(QUERY_CHUNK) {
            let (x, labels) = ds.gather(chunk);
            let posteriors = softmax_rows(&target.query(&x)?, 1.0)?;
            for (v, &y) in models.predict(&posteriors, &labels)?.iter().zip(&labels) {
                counts[y].record(v.member, member);
            }
        }
    }
    let fallback: Vec<bool> = (0..c).map(|k| !models.has_class_model(k)).collect();
    let mut report = AttackReport::from_class_counts(&counts, &fallback, target.query_count() - before);
    report.metadata.oracle_queries_total = target.query_count();
    Ok(report)
}
