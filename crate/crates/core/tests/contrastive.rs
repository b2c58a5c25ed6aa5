mod common;

use hsed::contrastive::{
    augment, bce_from_scores, discriminate, encode_views, readout, train_uhsed, uhsed_loss, AugmentationKind,
    AugmentationSpec, DiscriminatorParams, EmbeddingDump, LogisticOptions, LogisticRegression,
};
use hsed::diffcore::Tensor;
use hsed::encoders::{Activation, EncoderConfig, EncoderKind, TrainOptions};
use hsed::manifold::ManifoldSpec;
use hsed::synth::{two_communities, TwoCommunitySpec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{rng, uniform};

fn tensor(rows: usize, cols: usize, bound: f64) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-bound..bound, rows * cols).prop_map(move |d| Tensor::new(rows, cols, d).unwrap())
}

fn kind() -> impl Strategy<Value = AugmentationKind> {
    prop_oneof![
        Just(AugmentationKind::FeatureDropping),
        Just(AugmentationKind::RandomMasking),
        Just(AugmentationKind::FeatureCorruption)
    ]
}

proptest! {
    #[test]
    fn loss_is_non_negative(e in tensor(4, 3, 2.0), neg in tensor(5, 3, 2.0), w in tensor(3, 3, 2.0)) {
        let d = DiscriminatorParams::new(w).unwrap();
        let z = readout(&e).unwrap();
        prop_assert!(uhsed_loss(&e, &neg, &z, &d).unwrap() >= 0.0);
    }

    #[test]
    fn uninformative_discriminator_gives_ln_2(e in tensor(4, 3, 2.0), neg in tensor(2, 3, 2.0)) {
        let d = DiscriminatorParams::new(Tensor::zeros(3, 3)).unwrap();
        let z = readout(&e).unwrap();
        prop_assert!((uhsed_loss(&e, &neg, &z, &d).unwrap() - 2f64.ln()).abs() <= 1e-15);
        prop_assert!((bce_from_scores(&[0.5; 4], &[0.5; 2]).unwrap() - 2f64.ln()).abs() <= 1e-15);
    }

    #[test]
    fn scores_are_strictly_inside_unit_interval(e in tensor(1, 4, 3.0), w in tensor(4, 4, 3.0), z in tensor(1, 4, 1.0)) {
        let d = DiscriminatorParams::new(w).unwrap();
        let s = discriminate(e.row(0), z.row(0), &d).unwrap();
        prop_assert!(s > 0.0 && s < 1.0);
    }

    #[test]
    fn swapping_views_with_negated_scores_keeps_loss(e in tensor(3, 3, 2.0), neg in tensor(3, 3, 2.0), w in tensor(3, 3, 2.0)) {
        let z = readout(&e).unwrap();
        let d = DiscriminatorParams::new(w.clone()).unwrap();
        let flipped = DiscriminatorParams::new(w.map(|v| -v)).unwrap();
        let a = uhsed_loss(&e, &neg, &z, &d).unwrap();
        let b = uhsed_loss(&neg, &e, &z, &flipped).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn augmentation_keeps_topology(kind in kind(), seed in 0u64..1_000_000, rate in 0.0f64..=1.0) {
        let g = two_communities(&TwoCommunitySpec { num_nodes: 30, seed: seed % 7, ..Default::default() }).unwrap();
        let aug = augment(&g, &AugmentationSpec { kind, drop_rate: rate, seed }).unwrap();
        prop_assert_eq!(&aug.edges, &g.edges);
        prop_assert_eq!(&aug.node_ids, &g.node_ids);
        let zero_rows = |t: &Tensor| t.row_iter().filter(|r| r.iter().all(|&v| v == 0.0)).count();
        let zeros = |t: &Tensor| t.data().iter().filter(|&&v| v == 0.0).count();
        match kind {
            AugmentationKind::FeatureDropping => {
                prop_assert_eq!(zero_rows(&aug.features), (30.0 * rate - 1e-9).ceil().max(0.0) as usize);
            }
            AugmentationKind::RandomMasking => {
                prop_assert_eq!(zeros(&aug.features), (240.0 * rate - 1e-9).ceil().max(0.0) as usize);
            }
            AugmentationKind::FeatureCorruption => {
                let sorted = |t: &Tensor| {
                    let mut rows: Vec<Vec<u64>> = t.row_iter().map(|r| r.iter().map(|v| v.to_bits()).collect()).collect();
                    rows.sort();
                    rows
                };
                prop_assert_eq!(sorted(&aug.features), sorted(&g.features));
            }
        }
    }
}

#[test]
fn readout_by_hand() {
    let e = Tensor::from_rows(&[[1.0, -2.0], [3.0, 2.0]]).unwrap();
    let z = readout(&e).unwrap();
    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    assert!((z[0] - sig(2.0)).abs() < 1e-15);
    assert!((z[1] - 0.5).abs() < 1e-15);
    assert!(readout(&Tensor::zeros(0, 2)).is_err());
}

#[test]
fn augmentation_validates_rate_and_parses_names() {
    let g = two_communities(&TwoCommunitySpec { num_nodes: 10, ..Default::default() }).unwrap();
    let spec = AugmentationSpec { kind: AugmentationKind::FeatureDropping, drop_rate: 1.5, seed: 0 };
    assert!(augment(&g, &spec).is_err());
    for k in [AugmentationKind::FeatureDropping, AugmentationKind::RandomMasking, AugmentationKind::FeatureCorruption] {
        assert_eq!(k.name().parse::<AugmentationKind>().unwrap(), k);
    }
}

fn gcn(manifold: ManifoldSpec) -> EncoderConfig {
    EncoderConfig {
        hidden_layers: 1,
        hidden_dim: 8,
        activation: Activation::Relu,
        manifold,
        kind: EncoderKind::HyperbolicGcn,
    }
}

#[test]
fn views_must_share_structure() {
    let g = two_communities(&TwoCommunitySpec { num_nodes: 20, ..Default::default() }).unwrap();
    let other = two_communities(&TwoCommunitySpec { num_nodes: 20, seed: 1, ..Default::default() }).unwrap();
    let cfg = gcn(ManifoldSpec::poincare(1.0));
    let layers = cfg.init_layers(g.feature_dim(), &mut ChaCha8Rng::seed_from_u64(0));
    let (e, e2) = encode_views(&g, &g, &layers, &cfg).unwrap();
    assert_eq!(e, e2);
    assert!(encode_views(&g, &other, &layers, &cfg).is_err());
}

#[test]
fn training_is_seeded_and_lowers_the_loss() {
    let g = two_communities(&TwoCommunitySpec { num_nodes: 60, ..Default::default() }).unwrap();
    let aug = AugmentationSpec { kind: AugmentationKind::FeatureCorruption, drop_rate: 0.1, seed: 0 };
    let opts = TrainOptions { epochs: 40, learning_rate: 0.01, seed: 5 };
    for manifold in [ManifoldSpec::poincare(1.0), ManifoldSpec::hyperboloid(1.0), ManifoldSpec::euclidean()] {
        let a = train_uhsed(&g, &gcn(manifold), &aug, &opts).unwrap();
        let b = train_uhsed(&g, &gcn(manifold), &aug, &opts).unwrap();
        assert_eq!(a.embeddings, b.embeddings);
        assert_eq!(a.losses, b.losses);
        assert_eq!(a.embeddings.shape(), (60, 8));
        let head: f64 = a.losses[..5].iter().sum();
        let tail: f64 = a.losses[35..].iter().sum();
        assert!(tail < head, "{manifold:?}: {head} -> {tail}");
    }
}

#[test]
fn embedding_dump_roundtrip() {
    let dump = EmbeddingDump {
        embeddings: uniform(3, 2, 1.0, &mut rng(0)),
        node_ids: vec!["a".into(), "b".into(), "c".into()],
    };
    let back = EmbeddingDump::from_json(&dump.to_json().unwrap()).unwrap();
    assert_eq!(back, dump);
    assert!(EmbeddingDump::from_json(r#"{"num_nodes": 2, "dim": 1, "embeddings": [1.0, 2.0], "node_ids": ["a"]}"#).is_err());
}

#[test]
fn logistic_regression_separates_blobs() {
    let mut r = rng(9);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..90 {
        let c = i % 3;
        let noise = uniform(1, 2, 0.3, &mut r);
        rows.push(vec![c as f64 * 2.0 + noise.get(0, 0), (c == 1) as u8 as f64 * 3.0 + noise.get(0, 1)]);
        labels.push(c);
    }
    let e = Tensor::from_rows(&rows).unwrap();
    let train: Vec<usize> = (0..60).collect();
    let clf = LogisticRegression::fit(&e, &labels, &train, &LogisticOptions::default()).unwrap();
    let pred = clf.predict(&e.select_rows(&(60..90).collect::<Vec<_>>())).unwrap();
    let hits = pred.iter().zip(&labels[60..]).filter(|(a, b)| a == b).count();
    assert!(hits >= 28, "{hits}/30");
    assert!(LogisticRegression::fit(&e, &labels, &[0, 3, 6], &LogisticOptions::default()).is_err());
}
