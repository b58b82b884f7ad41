//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lleaks::losses::{cross_entropy_batch, distill_loss_batch, DistillConfig};
use lleaks::models::{build_arch, ArchId};
use lleaks::nn::{backward, finite_difference_grad, grads_agree, stencil_is_smooth, Network, Tensor};

pub const GRAD_REL: f64 = 1e-4;
pub const GRAD_ABS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    CrossEntropy,
    Kl(f64),
    Combined(DistillConfig),
}

impl LossKind {
    /// Loss value and logit gradient on a batch.
    pub fn eval(&self, teacher: &Tensor, logits: &Tensor, labels: &[usize]) -> (f64, Tensor) {
        match *self {
            LossKind::CrossEntropy => cross_entropy_batch(logits, labels).unwrap(),
            LossKind::Kl(t) => {
                let cfg = DistillConfig { temperature: t, alpha: 1.0, beta: 0.0 };
                distill_loss_batch(teacher, logits, None, &cfg).unwrap()
            }
            LossKind::Combined(cfg) => distill_loss_batch(teacher, logits, Some(labels), &cfg).unwrap(),
        }
    }
}

pub fn input_shape(arch: ArchId) -> Vec<usize> {
    match arch {
        ArchId::Lenet5 | ArchId::ShadowNn | ArchId::VggMini | ArchId::FcOnly => vec![1, 16, 16],
        _ => vec![10],
    }
}

/// A registry network with every parameter, biases included, drawn at random.
pub fn random_network(arch: ArchId, classes: usize, rng: &mut ChaCha8Rng) -> Network {
    let mut net = build_arch(arch, &input_shape(arch), classes, rng.random()).unwrap();
    for flat in 0..net.param_count() {
        let idx = net.locate(flat).unwrap();
        let v = net.param(idx).unwrap() + rng.random_range(-0.05..0.05);
        net.set_param(idx, v).unwrap();
    }
    net
}

pub fn random_batch(shape: &[usize], batch: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let mut full = vec![batch];
    full.extend_from_slice(shape);
    let n: usize = full.iter().product();
    Tensor::new(full, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

#[derive(Debug, Default)]
pub struct GradSummary {
    pub cases: usize,
    pub checked: usize,
    pub failures: Vec<String>,
    pub worst_rel: f64,
    /// Sampled coordinates redrawn because a ReLU or max-pool switched
    /// inside the difference stencil.
    pub redrawn: usize,
}

/// One case: a random network, batch and loss. Checks the loss gradient on
/// every logit and the full parameter gradient on `params_per_case`
/// sampled coordinates against central differences. Coordinates whose
/// stencil straddles a kink are redrawn.
pub fn grad_case(case: usize, params_per_case: usize, summary: &mut GradSummary) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6a0d + case as u64);
    let registry = ArchId::REGISTRY;
    let arch = registry[case % registry.len()];
    let classes = rng.random_range(2..=6);
    let loss = match (case / registry.len()) % 3 {
        0 => LossKind::CrossEntropy,
        1 => LossKind::Kl(rng.random_range(0.5..8.0)),
        _ => LossKind::Combined(DistillConfig {
            temperature: rng.random_range(0.5..8.0),
            alpha: rng.random_range(0.0..1.0),
            beta: rng.random_range(0.0..1.0),
        }),
    };
    let net = random_network(arch, classes, &mut rng);
    let batch = random_batch(&input_shape(arch), 3, &mut rng);
    let labels: Vec<usize> = (0..3).map(|_| rng.random_range(0..classes)).collect();
    let teacher = random_batch(&[classes], 3, &mut rng);
    let mut note = |what: String, analytic: f64, numeric: f64| {
        summary.checked += 1;
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-300);
        if analytic.abs().max(numeric.abs()) > 1e-4 {
            summary.worst_rel = summary.worst_rel.max(rel);
        }
        if !grads_agree(analytic, numeric, GRAD_REL, GRAD_ABS) {
            summary
                .failures
                .push(format!("case {case} {arch} {loss:?} {what}: {analytic} vs {numeric}"));
        }
    };

    let logits = net.forward(&batch).unwrap();
    let (_, dlogits) = loss.eval(&teacher, &logits, &labels);
    let h = 1e-6;
    for i in 0..logits.len() {
        let mut plus = logits.clone();
        plus.data_mut()[i] += h;
        let mut minus = logits.clone();
        minus.data_mut()[i] -= h;
        let numeric = (loss.eval(&teacher, &plus, &labels).0 - loss.eval(&teacher, &minus, &labels).0) / (2.0 * h);
        note(format!("logit {i}"), dlogits.data()[i], numeric);
    }

    let grads = backward(&net, &batch, &dlogits).unwrap();
    let loss_of = |z: &Tensor| loss.eval(&teacher, z, &labels).0;
    let mut redrawn = 0;
    for _ in 0..params_per_case {
        let idx = loop {
            let idx = net.locate(rng.random_range(0..net.param_count())).unwrap();
            if stencil_is_smooth(&net, &batch, idx).unwrap() {
                break idx;
            }
            redrawn += 1;
        };
        let numeric = finite_difference_grad(&net, loss_of, &batch, idx).unwrap();
        note(format!("param {idx:?}"), grads.get(idx).unwrap(), numeric);
    }
    summary.redrawn += redrawn;
    summary.cases += 1;
}

pub fn grad_suite(cases: usize, params_per_case: usize) -> GradSummary {
    let mut s = GradSummary::default();
    for case in 0..cases {
        grad_case(case, params_per_case, &mut s);
    }
    s
}

#[derive(Debug, Default)]
pub struct MetricSummary {
    pub lists: usize,
    pub mismatches: usize,
    pub worst_identity: f64,
}

/// Scores random prediction lists through `AttackReport` and recounts each
/// one by brute force.
pub fn metric_recount(lists: usize, seed: u64) -> MetricSummary {
    use lleaks::attack::{AttackReport, Confusion};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = MetricSummary { lists, ..MetricSummary::default() };
    for _ in 0..lists {
        let classes = rng.random_range(1..=10usize);
        let n = rng.random_range(0..400usize);
        // Skewed rates so empty-denominator cases show up.
        let p_pred = rng.random_range(0.0..=1.0f64).powi(3);
        let p_member = rng.random_range(0.0..=1.0f64);
        let rows: Vec<(bool, bool, usize)> = (0..n)
            .map(|_| (rng.random_bool(p_pred), rng.random_bool(p_member), rng.random_range(0..classes)))
            .collect();

        let counts: Vec<Confusion> = (0..classes)
            .map(|c| {
                let (p, a): (Vec<bool>, Vec<bool>) =
                    rows.iter().filter(|r| r.2 == c).map(|r| (r.0, r.1)).unzip();
                Confusion::from_predictions(&p, &a).unwrap()
            })
            .collect();
        let report = AttackReport::from_class_counts(&counts, &vec![false; classes], 0);

        let tp = rows.iter().filter(|r| r.0 && r.1).count() as f64;
        let flagged = rows.iter().filter(|r| r.0).count() as f64;
        let members = rows.iter().filter(|r| r.1).count() as f64;
        let ap = if flagged == 0.0 { 0.0 } else { tp / flagged };
        let ar = if members == 0.0 { 0.0 } else { tp / members };
        let f1 = if ap + ar == 0.0 { 0.0 } else { 2.0 * ap * ar / (ap + ar) };
        if report.ap != ap || report.ar != ar || report.f1 != f1 {
            s.mismatches += 1;
        }
        let fp = flagged - tp;
        let fn_ = members - tp;
        let by_counts = if tp == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fn_) };
        s.worst_identity = s.worst_identity.max((report.f1 - by_counts).abs());
        let total = report.confusion.tp + report.confusion.fp + report.confusion.tn + report.confusion.fn_;
        if total != n as u64 {
            s.mismatches += 1;
        }
    }
    s
}
