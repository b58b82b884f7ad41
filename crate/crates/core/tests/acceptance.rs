//! Acceptance gate. Runs every criterion in order, prints one PASS/FAIL
//! line each and exits nonzero if any failed.
//!
//! `LLEAKS_ACCEPT=2,3` restricts the run to the listed criteria.

mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lleaks::data::{gen_synthetic, load_mnist_dir, split_disjoint, SplitSpec, SyntheticSpec};
use lleaks::experiments::{
    experiment_ablation, experiment_architectures, experiment_missing_class, experiment_overfit_sweep,
    AblationResult, Lab, LabConfig, MissingClassConfig, ARM_LABEL, ARM_MI_SOFTMAX, ARM_SOFTMAX,
};
use lleaks::losses::{argmax, kl_logit_grad, kl_logit_grad_closed_form, mi_softmax, softmax, softmax_rows};
use lleaks::models::{build_arch, ArchId};
use lleaks::nn::{network_from_bytes, network_to_bytes};

const SEEDS: [u64; 3] = [0, 1, 2];
const ARCHS: [ArchId; 3] = [ArchId::VggMini, ArchId::ShadowNn, ArchId::FcOnly];

type Outcome = Result<(bool, String), String>;

fn mnist_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
}

fn mnist_lab() -> Result<&'static Lab, String> {
    static LAB: OnceLock<Result<Lab, String>> = OnceLock::new();
    LAB.get_or_init(|| {
        let ds = load_mnist_dir(mnist_dir())
            .map_err(|e| format!("MNIST unavailable in {}: {e}", mnist_dir().display()))?;
        let spec = SplitSpec {
            target_train_size: 15_000,
            shadow_train_size: 35_000,
            test_size: 10_000,
            seed: 0,
        };
        let splits = split_disjoint(&ds, &spec).map_err(|e| e.to_string())?;
        Lab::new(ds, splits, LabConfig::mnist()).map_err(|e| e.to_string())
    })
    .as_ref()
    .map_err(Clone::clone)
}

fn ablation() -> Result<&'static AblationResult, String> {
    static AB: OnceLock<Result<AblationResult, String>> = OnceLock::new();
    AB.get_or_init(|| experiment_ablation(mnist_lab()?, &SEEDS).map_err(|e| e.to_string()))
        .as_ref()
        .map_err(Clone::clone)
}

fn c1_gradients() -> Outcome {
    let start = Instant::now();
    let s = common::grad_suite(100, 12);
    let secs = start.elapsed().as_secs_f64();
    let pass = s.failures.is_empty() && s.cases == 100 && secs < 60.0;
    let mut detail = format!(
        "{} cases, {} checks, {} kinked coordinates redrawn, worst rel on entries above 1e-4 {:.2e}, {:.1}s",
        s.cases, s.checked, s.redrawn, s.worst_rel, secs
    );
    if let Some(f) = s.failures.first() {
        detail.push_str(&format!("; first failure: {f}"));
    }
    Ok((pass, detail))
}

fn zero_mean_unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let m = v.iter().sum::<f64>() / n as f64;
    v.iter_mut().for_each(|x| *x -= m);
    let top = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if top > 1.0 {
        v.iter_mut().for_each(|x| *x /= top);
    }
    v
}

fn rel_err(exact: &[f64], approx: &[f64]) -> f64 {
    let num: f64 = exact.iter().zip(approx).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = approx.iter().map(|b| b * b).sum();
    (num / den).sqrt()
}

fn c2_closed_form() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = [0.0f64; 3];
    let mut monotone = true;
    for _ in 0..200 {
        let n = rng.random_range(2..=10);
        let z = zero_mean_unit(&mut rng, n);
        let v = zero_mean_unit(&mut rng, n);
        let mut errs = [0.0; 3];
        for (k, t) in [10.0, 50.0, 100.0].into_iter().enumerate() {
            let exact = kl_logit_grad(&z, &v, t).map_err(|e| e.to_string())?;
            let approx = kl_logit_grad_closed_form(&z, &v, t, n).map_err(|e| e.to_string())?;
            errs[k] = rel_err(&exact, &approx);
            worst[k] = worst[k].max(errs[k]);
        }
        monotone &= errs[0] > errs[1] && errs[1] > errs[2];
    }
    Ok((
        monotone && worst[1] < 0.05,
        format!(
            "worst rel error T=10 {:.4}, T=50 {:.4}, T=100 {:.4}; decreasing on every draw: {monotone}",
            worst[0], worst[1], worst[2]
        ),
    ))
}

fn c3_softmax_limits() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut unit_gap = 0.0f64;
    let mut argmax_ok = 0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=12);
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-30.0..30.0)).collect();
        let t = 10f64.powf(rng.random_range(-2.0..4.0));
        let plain = softmax(&z).map_err(|e| e.to_string())?;
        let one = mi_softmax(&z, 1.0).map_err(|e| e.to_string())?;
        for (a, b) in plain.values().iter().zip(one.values()) {
            unit_gap = unit_gap.max((a - b).abs());
        }
        let heated = mi_softmax(&z, t).map_err(|e| e.to_string())?;
        argmax_ok += usize::from(argmax(heated.values()) == argmax(&z));
    }
    let mut uniform_gap = 0.0f64;
    for z in [vec![2.0, 0.0], vec![3.0, 1.0, 0.0], vec![10.0, -10.0, 5.0, 0.0]] {
        let p = mi_softmax(&z, 1e6).map_err(|e| e.to_string())?;
        let u = 1.0 / z.len() as f64;
        uniform_gap = uniform_gap.max(p.values().iter().fold(0.0f64, |a, x| a.max((x - u).abs())));
    }
    let pass = unit_gap <= 1e-15 && uniform_gap <= 1e-5 && argmax_ok == 1000;
    Ok((
        pass,
        format!("T=1 gap {unit_gap:.1e}, T=1e6 gap from uniform {uniform_gap:.1e}, argmax kept {argmax_ok}/1000"),
    ))
}

fn c4_metrics() -> Outcome {
    let s = common::metric_recount(1000, 4);
    Ok((
        s.mismatches == 0 && s.worst_identity <= 1e-12,
        format!("{} lists, {} mismatches, F1 identity gap {:.1e}", s.lists, s.mismatches, s.worst_identity),
    ))
}

/// Membership AUC and best F1 of a threshold on the target's own per-record
/// log-likelihood, scored exactly like the attacks.
fn loss_threshold_bound(lab: &Lab, seed: u64) -> Result<(f64, f64), String> {
    let target = lab.target(seed).map_err(|e| e.to_string())?;
    let ds = lab.dataset();
    let score = |idx: &[usize]| -> Result<Vec<f64>, String> {
        let mut out = Vec::with_capacity(idx.len());
        for chunk in idx.chunks(500) {
            let (x, y) = ds.gather(chunk);
            let logits = target.oracle.query(&x).map_err(|e| e.to_string())?;
            let p = softmax_rows(&logits, 1.0).map_err(|e| e.to_string())?;
            out.extend(p.rows_iter().zip(&y).map(|(r, &l)| r[l].max(1e-300).ln()));
        }
        Ok(out)
    };
    let members = score(&lab.splits().target_train)?;
    let others = score(lab.splits().eval_out())?;
    let mut all: Vec<(f64, bool)> =
        members.iter().map(|&v| (v, true)).chain(others.iter().map(|&v| (v, false))).collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (m, n) = (members.len() as f64, others.len() as f64);
    let (mut tp, mut fp, mut pairs, mut best) = (0.0, 0.0, 0.0, 0.0f64);
    for (_, member) in all {
        if member {
            tp += 1.0;
        } else {
            fp += 1.0;
            pairs += tp;
        }
        let (ap, ar) = (tp / (tp + fp), tp / m);
        best = best.max(2.0 * ap * ar / (ap + ar));
    }
    Ok((pairs / (m * n), best))
}

fn c5_ablation() -> Outcome {
    let start = Instant::now();
    let ab = ablation()?;
    let (auc, ceiling) = loss_threshold_bound(mnist_lab()?, SEEDS[0])?;
    let f1 = |arm: &str| ab.arm(arm).map(|s| s.mean_f1).ok_or(format!("arm {arm} missing"));
    let (label, soft, mi) = (f1(ARM_LABEL)?, f1(ARM_SOFTMAX)?, f1(ARM_MI_SOFTMAX)?);
    Ok((
        mi > soft && soft > label && mi - label >= 0.05,
        format!(
            "mean F1 over {} seeds: mi-softmax {mi:.4}, softmax {soft:.4}, label {label:.4}; margin {:.4}; \
             target loss-threshold AUC {auc:.4}, best F1 {ceiling:.4}; {:.0}s",
            SEEDS.len(),
            mi - label,
            start.elapsed().as_secs_f64()
        ),
    ))
}

fn c6_fidelity() -> Outcome {
    let ab = ablation()?;
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for &seed in &SEEDS {
        let r = ab.row(ARM_MI_SOFTMAX, seed).ok_or("missing ablation row")?;
        let gap = (r.shadow_test_accuracy - r.target_test_accuracy).abs();
        worst = worst.max(gap);
        parts.push(format!("seed {seed}: shadow {:.4} target {:.4}", r.shadow_test_accuracy, r.target_test_accuracy));
    }
    Ok((worst <= 0.015, format!("{}; worst gap {:.2} points", parts.join(", "), worst * 100.0)))
}

fn c7_missing_class() -> Outcome {
    let r = experiment_missing_class(mnist_lab()?, &MissingClassConfig::default()).map_err(|e| e.to_string())?;
    let pass = r.distilled_class_accuracy > 0.5
        && r.label_class_accuracy < 0.2
        && r.distilled_class_accuracy_bias >= r.distilled_class_accuracy
        && r.label_class_accuracy_bias >= r.label_class_accuracy;
    Ok((
        pass,
        format!(
            "class {}: distilled {:.4} (bias {:.4}), label-trained {:.4} (bias {:.4})",
            r.config.class_id,
            r.distilled_class_accuracy,
            r.distilled_class_accuracy_bias,
            r.label_class_accuracy,
            r.label_class_accuracy_bias
        ),
    ))
}

fn c8_overfit_sweep() -> Outcome {
    let spec = SyntheticSpec {
        flip_prob: 0.4,
        ..SyntheticSpec::purchase_like(0)
    };
    let ds = gen_synthetic(&spec).map_err(|e| e.to_string())?;
    let split = SplitSpec {
        target_train_size: 10_000,
        shadow_train_size: 4_662,
        test_size: 4_662,
        seed: 0,
    };
    let splits = split_disjoint(&ds, &split).map_err(|e| e.to_string())?;
    let lab = Lab::new(ds, splits, LabConfig::tabular()).map_err(|e| e.to_string())?;
    let r = experiment_overfit_sweep(&lab, 0, &[1, 2, 4, 6, 10, 15]).map_err(|e| e.to_string())?;
    let rho = r.overfit_correlation();
    let inv = r.f1_inversions();
    let inversions_ok = inv.len() <= 1 && inv.iter().all(|&d| d <= 0.02);
    let curve: Vec<String> = r
        .points
        .iter()
        .map(|p| format!("{}:{:.3}/{:.3}/{:.3}", p.epochs, p.target_overfit, p.shadow_overfit, p.f1))
        .collect();
    Ok((
        r.points.len() >= 5 && rho > 0.8 && inversions_ok,
        format!("spearman {rho:.3}, F1 inversions {inv:?}, epochs:target/shadow overfit/F1 {}", curve.join(" ")),
    ))
}

fn c9_architectures() -> Outcome {
    let start = Instant::now();
    let r = experiment_architectures(mnist_lab()?, &SEEDS[..1], &ARCHS).map_err(|e| e.to_string())?;
    let base = r.baseline_summary.mean_f1;
    let beats = r.summary.iter().all(|s| s.mean_f1 > base);
    let per: Vec<String> = r.summary.iter().map(|s| format!("{} {:.4}", s.arm, s.mean_f1)).collect();
    Ok((
        r.f1_spread() <= 0.08 && beats,
        format!(
            "{}; spread {:.4}; label baseline {base:.4}; {:.0}s",
            per.join(", "),
            r.f1_spread(),
            start.elapsed().as_secs_f64()
        ),
    ))
}

fn c10_loss_gap() -> Outcome {
    let ab = ablation()?;
    let mut pass = true;
    let mut parts = Vec::new();
    for &seed in &SEEDS {
        let d = ab.row(ARM_MI_SOFTMAX, seed).ok_or("missing ablation row")?;
        let l = ab.row(ARM_LABEL, seed).ok_or("missing ablation row")?;
        pass &= d.member_loss < d.nonmember_loss && d.loss_gap() > l.loss_gap();
        parts.push(format!(
            "seed {seed}: distilled {:.4}<{:.4} gap {:.4} vs label {:.4}",
            d.member_loss,
            d.nonmember_loss,
            d.loss_gap(),
            l.loss_gap()
        ));
    }
    Ok((pass, parts.join("; ")))
}

fn pipeline(dir: &Path) -> Result<PathBuf, String> {
    let cfg = dir.join("toy.cfg");
    std::fs::write(&cfg, "[data]\npreset = toy\n").map_err(|e| e.to_string())?;
    let out = dir.join("run");
    for phase in ["prepare-data", "train-target", "distill-shadow", "build-attack", "train-attack", "evaluate"] {
        let o = Command::new(env!("CARGO_BIN_EXE_lleaks"))
            .args(["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), phase])
            .env("RUST_LOG", "warn")
            .output()
            .map_err(|e| e.to_string())?;
        if !o.status.success() {
            return Err(format!("{phase}: {}", String::from_utf8_lossy(&o.stderr)));
        }
    }
    Ok(out)
}

fn c11_determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?);
    let (ra, rb) = (pipeline(a.path())?, pipeline(b.path())?);
    let files = [
        "dataset.lld",
        "splits.lls",
        "target.ckpt",
        "shadow.ckpt",
        "attack_set.las",
        "attack_model.lam",
        "report.json",
    ];
    let differ: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| std::fs::read(ra.join(f)).ok() != std::fs::read(rb.join(f)).ok())
        .collect();
    let recorded = |run: &Path| -> Result<Vec<(String, String)>, String> {
        let text = std::fs::read_to_string(run.join("manifest.json")).map_err(|e| e.to_string())?;
        let m: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        Ok(m["phases"]
            .as_array()
            .into_iter()
            .flatten()
            .flat_map(|p| p["artifacts"].as_array().cloned().unwrap_or_default())
            .map(|a| (a["path"].to_string(), a["sha256"].to_string()))
            .collect())
    };
    let hashes = recorded(&ra)?;
    let same_hashes = hashes.len() >= files.len() && hashes == recorded(&rb)?;
    let mut round_trips = 0;
    for arch in ArchId::REGISTRY {
        let shape = if arch.needs_image() || arch == ArchId::FcOnly { vec![1, 28, 28] } else { vec![600] };
        let net = build_arch(arch, &shape, 10, 11).map_err(|e| e.to_string())?;
        let back = network_from_bytes(&network_to_bytes(&net)).map_err(|e| e.to_string())?;
        round_trips += usize::from(back.bit_eq(&net));
    }
    Ok((
        differ.is_empty() && same_hashes && round_trips == ArchId::REGISTRY.len(),
        format!(
            "{} artifacts compared, differing: {differ:?}; manifest hashes agree: {same_hashes}; bit-exact checkpoint round trips {round_trips}/{}",
            files.len(),
            ArchId::REGISTRY.len()
        ),
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("gradient suite", c1_gradients),
        ("closed-form KL gradient", c2_closed_form),
        ("tempered softmax limits", c3_softmax_limits),
        ("metric recount", c4_metrics),
        ("ablation ordering", c5_ablation),
        ("shadow fidelity", c6_fidelity),
        ("missing-class transfer", c7_missing_class),
        ("overfit sweep", c8_overfit_sweep),
        ("architecture robustness", c9_architectures),
        ("loss separation", c10_loss_gap),
        ("determinism and persistence", c11_determinism),
    ];
    let only: Option<Vec<usize>> = std::env::var("LLEAKS_ACCEPT")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let (pass, detail) = match run() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!pass);
        println!("{} {id:>2} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
