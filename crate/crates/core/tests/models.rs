use lleaks::data::{gen_synthetic, split_disjoint, SplitSpec, SyntheticSpec};
use lleaks::experiments::LabConfig;
use lleaks::models::{build_arch, train_classifier, ArchId};
use lleaks::nn::{load_network, network_from_bytes, network_to_bytes, save_network};

const ARCHS: [ArchId; 6] = ArchId::REGISTRY;

fn shape_for(arch: ArchId) -> Vec<usize> {
    if arch.needs_image() || arch == ArchId::FcOnly {
        vec![1, 28, 28]
    } else {
        vec![600]
    }
}

#[test]
fn every_arch_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    for arch in ARCHS {
        let net = build_arch(arch, &shape_for(arch), 10, 42).unwrap();
        let bytes = network_to_bytes(&net);
        assert!(network_from_bytes(&bytes).unwrap().bit_eq(&net), "{arch}");
        let path = dir.path().join(format!("{arch}.ckpt"));
        save_network(&net, &path).unwrap();
        let back = load_network(&path).unwrap();
        assert!(back.bit_eq(&net), "{arch}");
        assert_eq!(network_to_bytes(&back), bytes);
    }
}

#[test]
fn build_arch_is_pure() {
    for arch in ARCHS {
        let a = build_arch(arch, &shape_for(arch), 10, 7).unwrap();
        let b = build_arch(arch, &shape_for(arch), 10, 7).unwrap();
        let c = build_arch(arch, &shape_for(arch), 10, 8).unwrap();
        assert!(a.bit_eq(&b));
        assert!(!a.bit_eq(&c), "{arch} ignores its seed");
    }
}

#[test]
fn tabular_training_accuracy_never_collapses() {
    let spec = SyntheticSpec {
        flip_prob: 0.4,
        ..SyntheticSpec::purchase_like(0)
    };
    let ds = gen_synthetic(&spec).unwrap();
    let split = SplitSpec {
        target_train_size: 10_000,
        shadow_train_size: 4_662,
        test_size: 4_662,
        seed: 0,
    };
    let splits = split_disjoint(&ds, &split).unwrap();
    let cfg = LabConfig::tabular();
    let net = build_arch(ArchId::MlpTabular, ds.sample_shape(), ds.num_classes(), 1).unwrap();
    let (_, h) = train_classifier(net, &ds, &splits.target_train, &splits.test, &cfg.target_sgd).unwrap();
    assert_eq!(h.epochs(), cfg.target_sgd.epochs);
    for w in h.train_accuracy.windows(2) {
        assert!(w[1] >= w[0] - 0.05, "train accuracy fell from {} to {}", w[0], w[1]);
    }
    assert!(h.train_accuracy.last().unwrap() > h.eval_accuracy.last().unwrap());
}
