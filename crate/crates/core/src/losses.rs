//! Probability transforms and training objectives.
//!
//! Every distillation objective here works on raw logits. The teacher side
//! is always a constant: gradients are only ever taken w.r.t. the student.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Lower clamp applied to probabilities before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// A probability vector over classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Probs(Vec<f64>);

impl Probs {
    /// Validates entries in `[0, 1]` that sum to one within `1e-9`.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("empty probability vector"));
        }
        if values.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid("probabilities must lie in [0, 1]"));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("probabilities sum to {sum}")));
        }
        Ok(Probs(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

/// Index of the first maximal entry.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Tempered softmax written into `out`; the shared kernel behind
/// [`softmax`] and [`mi_softmax`].
fn tempered_into(logits: &[f64], temperature: f64, out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = ((z - max) / temperature).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

fn check_logits(logits: &[f64]) -> Result<()> {
    if logits.is_empty() {
        return Err(Error::invalid("empty logit vector"));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::invalid("logits must be finite"));
    }
    Ok(())
}

fn check_temperature(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!("temperature must be positive, got {t}")));
    }
    Ok(())
}

/// `e^{z_i} / sum_k e^{z_k}`, stabilised by subtracting the maximum logit.
pub fn softmax(logits: &[f64]) -> Result<Probs> {
    mi_softmax(logits, 1.0)
}

/// Temperature-generalised softmax `e^{z_i/T} / sum_j e^{z_j/T}`.
///
/// `T = 1` is the ordinary softmax, large `T` flattens towards uniform and
/// `T -> 0+` approaches a one-hot argmax.
pub fn mi_softmax(logits: &[f64], temperature: f64) -> Result<Probs> {
    check_logits(logits)?;
    check_temperature(temperature)?;
    let mut out = vec![0.0; logits.len()];
    tempered_into(logits, temperature, &mut out);
    Ok(Probs(out))
}

/// Row-wise tempered softmax of a `[batch, classes]` logit tensor.
pub fn softmax_rows(logits: &Tensor, temperature: f64) -> Result<Tensor> {
    check_temperature(temperature)?;
    if logits.rank() != 2 {
        return Err(Error::invalid("expected [batch, classes] logits"));
    }
    if !logits.all_finite() {
        return Err(Error::invalid("logits must be finite"));
    }
    let c = logits.shape()[1];
    let mut out = vec![0.0; logits.len()];
    for (row, o) in logits.rows_iter().zip(out.chunks_exact_mut(c)) {
        tempered_into(row, temperature, o);
    }
    Tensor::new(logits.shape().to_vec(), out)
}

/// `-ln(max(probs[label], 1e-12))`.
pub fn cross_entropy(probs: &Probs, label: usize) -> Result<f64> {
    let p = probs.values().get(label).ok_or_else(|| {
        Error::invalid(format!("label {label} out of range for {} classes", probs.len()))
    })?;
    Ok(-p.max(PROB_FLOOR).ln())
}

/// `sum_i p_i ln(p_i / q_i)` with `0 ln 0 = 0`. Each `q_i` is clamped at
/// `min(1e-12, p_i)`, so `KL(p || p)` is exactly zero.
pub fn kl_divergence(p: &Probs, q: &Probs) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::invalid(format!(
            "distribution lengths differ: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    Ok(kl_raw(p.values(), q.values()))
}

fn kl_raw(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi.max(PROB_FLOOR.min(pi))).ln())
        .sum()
}

/// Weights of the combined distillation objective
/// `alpha * T^2 * KL(p_T(teacher) || q_T(student)) + beta * CE(q_1(student), label)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistillConfig {
    pub temperature: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            temperature: 4.0,
            alpha: 0.9,
            beta: 0.1,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        check_temperature(self.temperature)?;
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::invalid("alpha and beta must be nonnegative"));
        }
        if !(self.alpha + self.beta > 0.0) {
            return Err(Error::invalid("alpha + beta must be positive"));
        }
        Ok(())
    }
}

/// Per-sample distillation loss and its gradient w.r.t. the student logits.
///
/// The KL term compares both sides at temperature `T`; the label term
/// scores the student at temperature 1 and is skipped when `label` is
/// `None`.
pub fn distill_loss(
    teacher_logits: &[f64],
    student_logits: &[f64],
    label: Option<usize>,
    cfg: &DistillConfig,
) -> Result<(f64, Vec<f64>)> {
    cfg.validate()?;
    check_logits(teacher_logits)?;
    check_logits(student_logits)?;
    if teacher_logits.len() != student_logits.len() {
        return Err(Error::invalid(format!(
            "teacher has {} logits, student has {}",
            teacher_logits.len(),
            student_logits.len()
        )));
    }
    if let Some(l) = label {
        if l >= student_logits.len() {
            return Err(Error::invalid(format!(
                "label {l} out of range for {} classes",
                student_logits.len()
            )));
        }
    }
    let mut grad = vec![0.0; student_logits.len()];
    let mut scratch = Scratch::new(student_logits.len());
    let loss = distill_row(
        teacher_logits,
        student_logits,
        label,
        cfg,
        &mut scratch,
        &mut grad,
    );
    Ok((loss, grad))
}

struct Scratch {
    p: Vec<f64>,
    q: Vec<f64>,
}

impl Scratch {
    fn new(c: usize) -> Self {
        Scratch {
            p: vec![0.0; c],
            q: vec![0.0; c],
        }
    }
}

/// Writes the gradient into `grad` and returns the loss. Inputs are
/// pre-validated.
fn distill_row(
    teacher: &[f64],
    student: &[f64],
    label: Option<usize>,
    cfg: &DistillConfig,
    s: &mut Scratch,
    grad: &mut [f64],
) -> f64 {
    let t = cfg.temperature;
    let mut loss = 0.0;
    grad.fill(0.0);
    if cfg.alpha != 0.0 {
        tempered_into(teacher, t, &mut s.p);
        tempered_into(student, t, &mut s.q);
        loss += cfg.alpha * t * t * kl_raw(&s.p, &s.q);
        // d/dz [T^2 KL(p || q_T(z))] = T (q - p)
        let scale = cfg.alpha * t;
        for ((g, &q), &p) in grad.iter_mut().zip(&s.q).zip(&s.p) {
            *g += scale * (q - p);
        }
    }
    if let (Some(label), true) = (label, cfg.beta != 0.0) {
        loss += cfg.beta * ce_row(student, label, &mut s.q, grad, cfg.beta);
    }
    loss
}

/// Cross-entropy of `softmax(z)` against `label`; adds `weight * (q - onehot)`
/// into `grad`.
fn ce_row(z: &[f64], label: usize, q: &mut [f64], grad: &mut [f64], weight: f64) -> f64 {
    tempered_into(z, 1.0, q);
    let loss = -q[label].max(PROB_FLOOR).ln();
    for (i, (g, &qi)) in grad.iter_mut().zip(q.iter()).enumerate() {
        let target = if i == label { 1.0 } else { 0.0 };
        *g += weight * (qi - target);
    }
    loss
}

fn check_batch(logits: &Tensor, labels: Option<&[usize]>) -> Result<(usize, usize)> {
    if logits.rank() != 2 {
        return Err(Error::invalid("expected [batch, classes] logits"));
    }
    if !logits.all_finite() {
        return Err(Error::invalid("logits must be finite"));
    }
    let (b, c) = (logits.shape()[0], logits.shape()[1]);
    if let Some(labels) = labels {
        if labels.len() != b {
            return Err(Error::invalid(format!(
                "{} labels for a batch of {b}",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::invalid(format!("label {bad} out of range for {c} classes")));
        }
    }
    Ok((b, c))
}

/// Batch-mean cross-entropy of `softmax(logits)` and the gradient w.r.t.
/// the logits (already divided by the batch size).
pub fn cross_entropy_batch(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (b, c) = check_batch(logits, Some(labels))?;
    let mut grad = vec![0.0; b * c];
    let mut q = vec![0.0; c];
    let mut total = 0.0;
    for ((z, &y), g) in logits.rows_iter().zip(labels).zip(grad.chunks_exact_mut(c)) {
        total += ce_row(z, y, &mut q, g, 1.0);
    }
    let inv = b as f64;
    grad.iter_mut().for_each(|g| *g /= inv);
    Ok((total / inv, Tensor::new(vec![b, c], grad)?))
}

/// Batch-mean distillation loss and its gradient w.r.t. the student logits.
pub fn distill_loss_batch(
    teacher: &Tensor,
    student: &Tensor,
    labels: Option<&[usize]>,
    cfg: &DistillConfig,
) -> Result<(f64, Tensor)> {
    cfg.validate()?;
    let (b, c) = check_batch(student, labels)?;
    check_batch(teacher, None)?;
    if teacher.shape() != student.shape() {
        return Err(Error::invalid(format!(
            "teacher logits {:?} vs student logits {:?}",
            teacher.shape(),
            student.shape()
        )));
    }
    let mut grad = vec![0.0; b * c];
    let mut scratch = Scratch::new(c);
    let mut total = 0.0;
    for (i, g) in grad.chunks_exact_mut(c).enumerate() {
        total += distill_row(
            teacher.row(i),
            student.row(i),
            labels.map(|l| l[i]),
            cfg,
            &mut scratch,
            g,
        );
    }
    let inv = b as f64;
    grad.iter_mut().for_each(|g| *g /= inv);
    Ok((total / inv, Tensor::new(vec![b, c], grad)?))
}

/// Exact gradient of `KL(p_T(teacher) || q_T(student))` w.r.t. the student
/// logits: `(q_i - p_i) / T`.
pub fn kl_logit_grad(student: &[f64], teacher: &[f64], temperature: f64) -> Result<Vec<f64>> {
    let q = mi_softmax(student, temperature)?;
    let p = mi_softmax(teacher, temperature)?;
    if p.len() != q.len() {
        return Err(Error::invalid("logit lengths differ"));
    }
    Ok(q.values()
        .iter()
        .zip(p.values())
        .map(|(q, p)| (q - p) / temperature)
        .collect())
}

/// High-temperature approximation of [`kl_logit_grad`] for zero-mean
/// logits: `(z_i - v_i) / (N T^2)`.
pub fn kl_logit_grad_closed_form(
    student: &[f64],
    teacher: &[f64],
    temperature: f64,
    n: usize,
) -> Result<Vec<f64>> {
    check_temperature(temperature)?;
    if student.len() != n || teacher.len() != n {
        return Err(Error::invalid(format!(
            "expected {n} logits, got {} and {}",
            student.len(),
            teacher.len()
        )));
    }
    for (name, v) in [("student", student), ("teacher", teacher)] {
        let sum: f64 = v.iter().sum();
        if sum.abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "{name} logits must be zero-mean, sum is {sum}"
            )));
        }
    }
    let denom = n as f64 * temperature * temperature;
    Ok(student
        .iter()
        .zip(teacher)
        .map(|(z, v)| (z - v) / denom)
        .collect())
}
