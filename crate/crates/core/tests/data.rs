use std::collections::HashSet;

use lleaks::data::{
    batches, dataset_from_bytes, dataset_to_bytes, gen_synthetic, load_mnist_idx, parse_idx_images,
    parse_idx_labels, remove_class, splits_from_bytes, splits_to_bytes, split_disjoint, Dataset,
    SplitSpec, SyntheticSpec,
};
use lleaks::nn::Tensor;
use lleaks::Error;
use proptest::prelude::*;

/// Byte-at-a-time reading of an IDX file, independent of the library.
fn reference_idx(bytes: &[u8]) -> Option<(u8, Vec<usize>, Vec<u8>)> {
    if bytes.len() < 4 || bytes[0] != 0 || bytes[1] != 0 || bytes[2] != 0x08 {
        return None;
    }
    let ndim = bytes[3] as usize;
    let mut dims = Vec::new();
    let mut pos = 4;
    for _ in 0..ndim {
        let mut v = 0usize;
        for _ in 0..4 {
            v = v * 256 + *bytes.get(pos)? as usize;
            pos += 1;
        }
        dims.push(v);
    }
    let total: usize = dims.iter().product();
    let body = bytes.get(pos..pos + total)?;
    Some((bytes[3], dims, body.to_vec()))
}

fn image_fixture(n: u32, rows: u32, cols: u32, seed: u8) -> Vec<u8> {
    let mut b = vec![0, 0, 8, 3];
    for d in [n, rows, cols] {
        b.extend_from_slice(&d.to_be_bytes());
    }
    b.extend((0..n * rows * cols).map(|i| (i as u8).wrapping_mul(31).wrapping_add(seed)));
    b
}

fn label_fixture(labels: &[u8]) -> Vec<u8> {
    let mut b = vec![0, 0, 8, 1];
    b.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    b.extend_from_slice(labels);
    b
}

#[test]
fn idx_parser_agrees_with_reference_on_fixtures() {
    for (n, r, c, seed) in [(1, 1, 1, 0), (3, 2, 5, 7), (10, 28, 28, 200), (4, 7, 3, 255)] {
        let img = image_fixture(n, r, c, seed);
        let (count, rows, cols, px) = parse_idx_images(&img).unwrap();
        let (nd, dims, body) = reference_idx(&img).unwrap();
        assert_eq!(nd, 3);
        assert_eq!(dims, vec![count, rows, cols]);
        assert_eq!(px, body.as_slice());
    }
    let lbl = label_fixture(&[3, 1, 4, 1, 5, 9, 2, 6]);
    let (nd, dims, body) = reference_idx(&lbl).unwrap();
    assert_eq!((nd, dims), (1, vec![8]));
    assert_eq!(parse_idx_labels(&lbl).unwrap(), body.as_slice());
}

#[test]
fn idx_pair_loads_scaled_pixels() {
    let dir = tempfile::tempdir().unwrap();
    let img = image_fixture(4, 3, 3, 9);
    std::fs::write(dir.path().join("i"), &img).unwrap();
    std::fs::write(dir.path().join("l"), label_fixture(&[0, 9, 3, 3])).unwrap();
    let ds = load_mnist_idx(dir.path().join("i"), dir.path().join("l")).unwrap();
    assert_eq!(ds.features().shape(), &[4, 1, 3, 3]);
    assert_eq!(ds.labels(), &[0, 9, 3, 3]);
    let (_, _, body) = reference_idx(&img).unwrap();
    for (v, &p) in ds.features().data().iter().zip(&body) {
        assert_eq!(*v, p as f64 / 255.0);
    }

    std::fs::write(dir.path().join("l"), label_fixture(&[0, 9, 3])).unwrap();
    let err = load_mnist_idx(dir.path().join("i"), dir.path().join("l")).unwrap_err();
    assert!(matches!(err, Error::CountMismatch { images: 4, labels: 3 }));
}

#[test]
fn malformed_idx_is_rejected() {
    let mut img = image_fixture(2, 2, 2, 0);
    assert!(matches!(parse_idx_labels(&img), Err(Error::BadMagic { .. })));
    img.truncate(img.len() - 1);
    assert!(matches!(parse_idx_images(&img), Err(Error::Truncated { needed: 1, .. })));
    assert!(matches!(parse_idx_images(&img[..6]), Err(Error::Truncated { .. })));
    let mut huge = vec![0, 0, 8, 3];
    huge.extend_from_slice(&[0xff; 12]);
    assert!(parse_idx_images(&huge).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
        let _ = parse_idx_images(&bytes);
        let _ = parse_idx_labels(&bytes);
        let _ = dataset_from_bytes(&bytes);
        let _ = splits_from_bytes(&bytes);
    }

    #[test]
    fn idx_images_match_reference(n in 1u32..6, r in 1u32..6, c in 1u32..6, seed in any::<u8>()) {
        let img = image_fixture(n, r, c, seed);
        let (count, rows, cols, px) = parse_idx_images(&img).unwrap();
        let (_, dims, body) = reference_idx(&img).unwrap();
        prop_assert_eq!(dims, vec![count, rows, cols]);
        prop_assert_eq!(px, body.as_slice());
    }

    #[test]
    fn splits_are_disjoint_and_exact(
        classes in 2usize..6,
        per_class in 20usize..60,
        a in 1usize..40,
        b in 1usize..40,
        c in 2usize..40,
        seed in any::<u64>(),
    ) {
        let n = classes * per_class;
        prop_assume!(a + b + c <= n);
        let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
        let ds = Dataset::new("grid", Tensor::zeros(&[n, 1]), labels, classes).unwrap();
        let s = split_disjoint(&ds, &SplitSpec {
            target_train_size: a,
            shadow_train_size: b,
            test_size: c,
            seed,
        }).unwrap();
        prop_assert_eq!((s.target_train.len(), s.shadow_train.len(), s.test.len()), (a, b, c));
        let all: HashSet<usize> = s.target_train.iter().chain(&s.shadow_train).chain(&s.test).copied().collect();
        prop_assert_eq!(all.len(), a + b + c);
        prop_assert!(all.iter().all(|&i| i < n));
        prop_assert!(s.check_disjoint(n).is_ok());
        let round = splits_from_bytes(&splits_to_bytes(&s)).unwrap();
        prop_assert_eq!(round, s);
    }

    #[test]
    fn batches_cover_indices_once(n in 1usize..200, bs in 1usize..70, seed in any::<u64>()) {
        let ds = Dataset::new("seq", Tensor::zeros(&[n, 2]), vec![0; n], 1).unwrap();
        let idx: Vec<usize> = (0..n).rev().collect();
        let mut seen: Vec<usize> = batches(&ds, &idx, bs, Some(seed))
            .unwrap()
            .flat_map(|b| b.indices)
            .collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
    }
}

#[test]
fn oversized_split_is_infeasible() {
    let ds = Dataset::new("tiny", Tensor::zeros(&[10, 1]), vec![0; 10], 1).unwrap();
    let spec = SplitSpec { target_train_size: 5, shadow_train_size: 5, test_size: 1, seed: 0 };
    assert!(matches!(split_disjoint(&ds, &spec), Err(Error::InfeasibleSplit(_))));
}

#[test]
fn synthetic_samples_sit_nearest_their_prototype() {
    let spec = SyntheticSpec::new(1000, 64, 5, 11);
    let ds = gen_synthetic(&spec).unwrap();
    // Recover prototypes as per-class bit majorities.
    let d = 64;
    let mut ones = vec![vec![0usize; d]; 5];
    let counts = ds.class_counts(&(0..1000).collect::<Vec<_>>());
    for (row, &y) in ds.features().rows_iter().zip(ds.labels()) {
        for (k, &v) in row.iter().enumerate() {
            ones[y][k] += (v > 0.5) as usize;
        }
    }
    let protos: Vec<Vec<bool>> = (0..5)
        .map(|c| ones[c].iter().map(|&o| 2 * o > counts[c]).collect())
        .collect();
    let mut own = 0.0;
    let mut other = 0.0;
    for (row, &y) in ds.features().rows_iter().zip(ds.labels()) {
        for (c, p) in protos.iter().enumerate() {
            let h = row.iter().zip(p).filter(|(&v, &b)| (v > 0.5) != b).count() as f64;
            if c == y { own += h } else { other += h / 4.0 }
        }
    }
    assert!(own / 1000.0 < other / 1000.0, "own {own} other {other}");
    assert!((own / 1000.0 / d as f64 - spec.flip_prob).abs() < 0.03);
    assert_eq!(gen_synthetic(&spec).unwrap(), ds);
}

#[test]
fn dataset_container_round_trips_and_class_removal() {
    let ds = gen_synthetic(&SyntheticSpec::new(120, 9, 3, 2)).unwrap();
    let back = dataset_from_bytes(&dataset_to_bytes(&ds)).unwrap();
    assert_eq!(back, ds);
    let idx: Vec<usize> = (0..120).collect();
    let kept = remove_class(&ds, &idx, 1);
    assert!(kept.iter().all(|&i| ds.labels()[i] != 1));
    assert_eq!(kept.len() + ds.class_counts(&idx)[1], 120);
}
