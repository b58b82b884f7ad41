use lleaks::attack::{build_attack_set, evaluate_attack, train_attack_models, BALANCE_CAP};
use lleaks::cli::{Preset, RunConfig};
use lleaks::data::{gen_indicator_toy, split_disjoint};
use lleaks::experiments::{derive_seed, Lab, ShadowKind, STREAM_BALANCE};
use lleaks::models::ArchId;

fn toy_lab() -> Lab {
    let cfg = RunConfig::defaults(Preset::Toy);
    let ds = gen_indicator_toy(600, 4).unwrap();
    let splits = split_disjoint(&ds, &cfg.split).unwrap();
    Lab::new(ds, splits, cfg.lab).unwrap()
}

#[test]
fn memorizing_target_is_fully_exposed() {
    let lab = toy_lab();
    let target = lab.target(0).unwrap();
    assert_eq!(target.train_accuracy, 1.0);
    let kind = ShadowKind::Distilled(lab.config().distill);
    let r = lab.run_arm("mi-softmax", &target, 0, ArchId::MlpTabular, kind).unwrap();
    assert_eq!((r.report.ap, r.report.ar, r.report.f1), (1.0, 1.0, 1.0));
    assert_eq!(r.report.confusion.total(), 300);
}

#[test]
fn attack_set_conserves_and_balances_records() {
    let lab = toy_lab();
    let s = lab.splits();
    let target = lab.target(0).unwrap();
    let shadow = lab.shadow(&target, 0, ArchId::MlpTabular, ShadowKind::Label, None).unwrap();
    // Uneven sides so the cap has to bite.
    let members = &s.shadow_train[..];
    let out = &s.shadow_out()[..40];
    let set = build_attack_set(&shadow, lab.dataset(), members, out, derive_seed(0, STREAM_BALANCE)).unwrap();
    assert_eq!(set.pre_balance_count(), members.len() + out.len());
    for c in 0..set.num_classes() {
        let (m, n) = set.side_counts(c);
        if m + n == 0 {
            continue;
        }
        assert!(m > 0 && n > 0, "class {c} lost a side");
        assert!(m.max(n) as f64 <= BALANCE_CAP * (m + n) as f64 + 1e-9, "class {c}: {m}/{n}");
    }
    assert!(set.len() < set.pre_balance_count());
}

#[test]
fn pipeline_reruns_compare_equal() {
    let run = || {
        let lab = toy_lab();
        let s = lab.splits().clone();
        let target = lab.target(3).unwrap();
        let shadow = lab
            .shadow(&target, 3, ArchId::MlpTabular, ShadowKind::Distilled(lab.config().distill), None)
            .unwrap();
        let set = build_attack_set(&shadow, lab.dataset(), &s.shadow_train, s.shadow_out(), 5).unwrap();
        let models = train_attack_models(&set, &lab.config().attack).unwrap();
        evaluate_attack(&models, &target.oracle, lab.dataset(), &s.target_train, s.eval_out()).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn evaluation_rejects_overlapping_pools() {
    let lab = toy_lab();
    let s = lab.splits();
    let target = lab.target(0).unwrap();
    let shadow = lab.shadow(&target, 0, ArchId::MlpTabular, ShadowKind::Label, None).unwrap();
    let set = build_attack_set(&shadow, lab.dataset(), &s.shadow_train, s.shadow_out(), 1).unwrap();
    let models = train_attack_models(&set, &lab.config().attack).unwrap();
    let overlap = &s.target_train[..10];
    assert!(evaluate_attack(&models, &target.oracle, lab.dataset(), &s.target_train, overlap).is_err());
}
