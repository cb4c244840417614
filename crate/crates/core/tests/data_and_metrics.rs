use memsac_core::data::{
    apply_domain_shift, batch_sampler, format_feature_table, gen_gaussian_mixture,
    parse_feature_table, FeatureTable, MixtureSpec, RotationMode, ShiftSpec,
};
use memsac_core::metrics::{
    accuracy, macro_average, mean_similarity_score, per_class_accuracy, ScoreMode,
};
use memsac_core::nn::Tensor2;
use memsac_core::similarity::{LabeledFeatures, SimilarityKind};
use proptest::prelude::*;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rotations_preserve_distances_and_labels(
        dim in 2usize..9,
        degrees in -180.0f64..180.0,
        block in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let ds = gen_gaussian_mixture(&MixtureSpec {
            classes: 3, dim, per_class: 5, class_spread: 2.0, within_class_std: 1.0, seed,
        }).unwrap();
        let spec = ShiftSpec {
            mode: if block { RotationMode::BlockDiagonal } else { RotationMode::Plane },
            ..ShiftSpec::rotation_degrees(degrees, 0.0, seed)
        };
        let shifted = apply_domain_shift(&ds, &spec).unwrap();
        prop_assert_eq!(&shifted.labels, &ds.labels);
        for i in 0..ds.len() {
            for j in 0..i {
                let before = dist(ds.samples.row(i), ds.samples.row(j));
                let after = dist(shifted.samples.row(i), shifted.samples.row(j));
                prop_assert!((before - after).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn every_epoch_is_a_permutation(
        n in 1usize..60,
        batch in 1usize..16,
        seed in any::<u64>(),
        epoch in 0usize..4,
    ) {
        // Batches window a stream of per-epoch permutations.
        let iters = ((epoch + 1) * n).div_ceil(batch);
        let mut stream: Vec<usize> = Vec::new();
        for it in 0..iters {
            let b = batch_sampler(n, batch, seed, it);
            prop_assert_eq!(&b, &batch_sampler(n, batch, seed, it));
            stream.extend(b);
        }
        let mut seen = stream[epoch * n..(epoch + 1) * n].to_vec();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn tables_round_trip_exactly(
        rows in prop::collection::vec(
            (prop::option::of(0usize..4), prop::collection::vec(-1e6f64..1e6, 3)), 1..20),
    ) {
        let table = FeatureTable {
            samples: Tensor2::from_rows(&rows.iter().map(|r| r.1.clone()).collect::<Vec<_>>()).unwrap(),
            labels: rows.iter().map(|r| r.0).collect(),
            classes: 4,
        };
        let back = parse_feature_table(&format_feature_table(&table), "memory").unwrap();
        prop_assert_eq!(back, table);
    }

    #[test]
    fn perfect_predictions_score_one(truth in prop::collection::vec(0usize..7, 1..50)) {
        prop_assert_eq!(accuracy(&truth, &truth).unwrap(), 1.0);
        let mut wrong = truth.clone();
        wrong[0] = 7;
        let counted = wrong.iter().zip(&truth).filter(|(a, b)| a == b).count();
        prop_assert_eq!(accuracy(&wrong, &truth).unwrap(), counted as f64 / truth.len() as f64);
    }

    #[test]
    fn balanced_macro_equals_overall(
        per in 1usize..6,
        preds in prop::collection::vec(0usize..4, 24),
    ) {
        // Four classes, `per` samples each.
        let truth: Vec<usize> = (0..4).flat_map(|c| std::iter::repeat_n(c, per)).collect();
        let preds = &preds[..truth.len()];
        let overall = accuracy(preds, &truth).unwrap();
        let macro_avg = macro_average(&per_class_accuracy(preds, &truth, 4));
        prop_assert!((overall - macro_avg).abs() <= 1e-12);
    }

    #[test]
    fn averaged_cosine_score_is_bounded(
        t in prop::collection::vec(-1.0f64..1.0, 12),
        s in prop::collection::vec(-1.0f64..1.0, 24),
        labels in prop::collection::vec(0usize..3, 8),
        anchors in prop::collection::vec(0usize..3, 4),
    ) {
        let targets = Tensor2::from_vec(4, 3, t).unwrap();
        let sources = Tensor2::from_vec(8, 3, s).unwrap();
        prop_assume!(targets.iter_rows().chain(sources.iter_rows())
            .all(|r| r.iter().map(|v| v * v).sum::<f64>() > 1e-6));
        let set = LabeledFeatures::new(&sources, &labels).unwrap();
        let v = mean_similarity_score(&targets, &set, &anchors, SimilarityKind::Cosine, ScoreMode::Averaged).unwrap();
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&v));
        let again = mean_similarity_score(&targets, &set, &anchors, SimilarityKind::Cosine, ScoreMode::Averaged).unwrap();
        prop_assert_eq!(v.to_bits(), again.to_bits());
    }
}

#[test]
fn rotation_zero_changes_nothing() {
    let ds = gen_gaussian_mixture(&MixtureSpec::default()).unwrap();
    let same = apply_domain_shift(&ds, &ShiftSpec::identity()).unwrap();
    assert_eq!(same.samples, ds.samples);
}
