use std::path::PathBuf;

use proptest::prelude::*;
use trusted::io::{emb_file_len, load_detector, read_bundle, store_detector, write_bundle};
use trusted::model::ClassSelection;
use trusted::{AggregationKind, Detector, DetectorConfig, EmbeddingBundle, ScoreKind};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn golden_emb1_values() {
    let b = read_bundle(fixture("golden.emb1")).unwrap();
    assert_eq!((b.n(), b.layers(), b.dim(), b.classes()), (2, 2, 3, 2));
    let flat: Vec<f32> = b.features().iter().copied().collect();
    assert_eq!(
        flat,
        [0.5, -1.25, 2.0, 3.0, 0.0, -0.75, 1.5, 1.5, -2.5, 4.0, 0.25, -8.0]
    );
    assert_eq!(b.features()[[1, 0, 2]], -2.5);
    assert_eq!(b.logits().iter().copied().collect::<Vec<_>>(), [1.0, -1.0, -0.5, 2.5]);
    assert_eq!(b.gold_labels(), [1, 0]);
    assert_eq!(b.predicted_labels(), [-1, 1]);
    assert_eq!(std::fs::metadata(fixture("golden.emb1")).unwrap().len(), emb_file_len(2, 2, 3, 2).unwrap());
}

#[test]
fn golden_emb1_rewrites_identically() {
    let original = std::fs::read(fixture("golden.emb1")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("copy.emb1");
    write_bundle(&read_bundle(fixture("golden.emb1")).unwrap(), &path).unwrap();
    assert_eq!(std::fs::read(path).unwrap(), original);
}

#[test]
fn golden_det1_values() {
    let det = load_detector(fixture("golden_irw.det1")).unwrap();
    let cfg = det.config();
    assert_eq!(cfg.score_kind, ScoreKind::Irw);
    assert_eq!(cfg.aggregation, AggregationKind::PowerMean);
    assert_eq!(cfg.class_selection, ClassSelection::Predicted);
    assert_eq!((cfg.n_proj, cfg.seed, cfg.temperature, cfg.shrinkage), (2, 9, 1.0, 1e-6));
    assert_eq!((det.classes(), det.dim()), (2, 2));
    assert_eq!(det.class_counts(), [2, 1]);

    // axis directions over {(0,0), (2,2)} and {(5,5)}
    assert_eq!(det.score_trusted(&[1.0, 1.0], 0).unwrap(), 0.5);
    assert_eq!(det.score_trusted(&[0.0, 0.0], 0).unwrap(), 0.5);
    assert_eq!(det.score_trusted(&[3.0, 0.0], 0).unwrap(), 0.25);
    assert_eq!(det.score_trusted(&[1.0, 1.0], 1).unwrap(), 0.0);
    assert_eq!(det.score_trusted(&[5.0, 5.0], 1).unwrap(), 0.0);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("copy.det1");
    store_detector(&det, &path).unwrap();
    assert_eq!(std::fs::read(path).unwrap(), std::fs::read(fixture("golden_irw.det1")).unwrap());
}

prop_compose! {
    fn bundles()(n in 1usize..6, l in 1usize..4, d in 1usize..5, c in 2usize..4)
        (features in prop::collection::vec(-1e6f32..1e6, n * l * d),
         logits in prop::collection::vec(-50f32..50.0, n * c),
         gold in prop::collection::vec(-1i32..c as i32, n),
         predicted in prop::collection::vec(-1i32..c as i32, n),
         n in Just(n), l in Just(l), d in Just(d), c in Just(c))
        -> EmbeddingBundle
    {
        EmbeddingBundle::from_parts(n, l, d, c, features, logits, gold, predicted).unwrap()
    }
}

fn train_bundle(seed: u64, n: usize, l: usize, d: usize, c: usize) -> EmbeddingBundle {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let features = (0..n * l * d).map(|_| rng.random_range(-3.0f32..3.0)).collect();
    let logits = (0..n * c).map(|_| rng.random_range(-3.0f32..3.0)).collect();
    let predicted = (0..n).map(|i| (i % c) as i32).collect();
    EmbeddingBundle::from_parts(n, l, d, c, features, logits, vec![-1; n], predicted).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn emb1_round_trip_is_bit_exact(b in bundles()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.emb1");
        write_bundle(&b, &path).unwrap();
        let len = std::fs::metadata(&path).unwrap().len();
        prop_assert_eq!(Some(len), emb_file_len(b.n() as u64, b.layers() as u64, b.dim() as u64, b.classes() as u64));
        let back = read_bundle(&path).unwrap();
        let bits = |x: &EmbeddingBundle| x.features().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&b));
        prop_assert_eq!(back, b);
    }

    #[test]
    fn det1_round_trip_scores_bit_identically(
        seed in any::<u64>(),
        kind in prop::sample::select(ScoreKind::ALL.to_vec()),
        agg in prop::sample::select(AggregationKind::ALL.to_vec()),
        best in any::<bool>(),
        n_proj in 1usize..40,
    ) {
        let train = train_bundle(seed, 24, 2, 3, 3);
        let test = train_bundle(seed ^ 1, 10, 2, 3, 3);
        let config = DetectorConfig {
            score_kind: kind,
            aggregation: agg,
            n_proj,
            seed,
            class_selection: if best { ClassSelection::Best } else { ClassSelection::Predicted },
            ..DetectorConfig::default()
        };
        let det = Detector::fit(&train, &config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.det1");
        store_detector(&det, &path).unwrap();
        let back = load_detector(&path).unwrap();
        prop_assert_eq!(back.config(), det.config());
        let a: Vec<u64> = det.score_batch(&test).unwrap().as_slice().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = back.score_batch(&test).unwrap().as_slice().iter().map(|v| v.to_bits()).collect();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn det1_rejects_trailing_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.det1");
    let mut bytes = std::fs::read(fixture("golden_irw.det1")).unwrap();
    bytes.push(0);
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(load_detector(&path), Err(trusted::Error::Malformed { .. })));
}
