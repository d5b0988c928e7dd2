mod common;

use common::{brute_aupr, brute_auc, brute_metrics, hand_table};
use proptest::prelude::*;
use ragseco::autodiff::Tensor;
use ragseco::train::{average_precision, compute_metrics, roc_auc};

fn table(probs: &[Vec<f64>]) -> Tensor {
    Tensor::from_rows(probs).unwrap()
}

#[test]
fn hand_table_matches_counts() {
    let (probs, labels) = hand_table();
    let m = compute_metrics(&table(&probs), &labels).unwrap();
    assert_eq!(m.acc, 0.7);
    assert!((m.precision - (3.0 / 5.0 + 2.0 / 3.0 + 1.0) / 3.0).abs() < 1e-12);
    assert!((m.recall - (3.0 / 4.0 + 2.0 / 3.0 + 2.0 / 3.0) / 3.0).abs() < 1e-12);
    for (got, want) in m.values().iter().zip(brute_metrics(&probs, &labels)) {
        assert!((got - want).abs() <= 1e-9, "{got} vs {want}");
    }
}

#[test]
fn binary_rank_examples() {
    assert_eq!(roc_auc(&[0.9, 0.1], &[true, false]), Some(1.0));
    assert_eq!(average_precision(&[0.9, 0.1], &[true, false]), Some(1.0));
    assert_eq!(roc_auc(&[0.1, 0.9], &[true, false]), Some(0.0));
    assert_eq!(roc_auc(&[0.5, 0.5], &[true, false]), Some(0.5));
    assert_eq!(roc_auc(&[0.5, 0.5], &[true, true]), None);
    assert_eq!(average_precision(&[0.5], &[false]), None);
}

#[test]
fn perfect_and_chance_classifiers() {
    let labels = [0, 2, 1, 1, 0];
    let mut onehot = Tensor::zeros(&[5, 3]);
    for (k, &y) in labels.iter().enumerate() {
        onehot.set(k, y, 1.0);
    }
    let m = compute_metrics(&onehot, &labels).unwrap();
    assert_eq!(m.values(), [1.0; 6]);

    let uniform = Tensor::full(&[4, 2], 0.5);
    let m = compute_metrics(&uniform, &[0, 1, 0, 1]).unwrap();
    assert_eq!(m.acc, 0.5);
    assert_eq!(m.auc, 0.5);
}

#[test]
fn single_event_labels_are_flagged() {
    let probs = Tensor::from_rows(&[vec![0.8, 0.2], vec![0.6, 0.4]]).unwrap();
    let m = compute_metrics(&probs, &[0, 0]).unwrap();
    assert!(!m.warnings.is_empty());
    assert_eq!(m.per_event[0].auc, None);
    assert!(m.to_text().contains("NA"));
}

#[test]
fn report_text_has_stable_keys() {
    let (probs, labels) = hand_table();
    let text = compute_metrics(&table(&probs), &labels).unwrap().to_text();
    let keys: Vec<&str> = text.lines().take(6).map(|l| l.split('=').next().unwrap()).collect();
    assert_eq!(keys, ["acc", "aupr", "auc", "precision", "recall", "f1"]);
}

fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..200).prop_flat_map(|n| {
        // coarse scores produce plenty of ties
        (prop::collection::vec(0u8..20, n), prop::collection::vec(any::<bool>(), n))
            .prop_map(|(s, p)| (s.into_iter().map(|v| f64::from(v) / 19.0).collect(), p))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn auc_matches_pair_counting((scores, pos) in scored_labels()) {
        match (roc_auc(&scores, &pos), brute_auc(&scores, &pos)) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-9, "{} vs {}", a, b),
            (a, b) => prop_assert_eq!(a, b),
        }
    }

    #[test]
    fn aupr_matches_threshold_walk((scores, pos) in scored_labels()) {
        match (average_precision(&scores, &pos), brute_aupr(&scores, &pos)) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-9, "{} vs {}", a, b),
            (a, b) => prop_assert_eq!(a, b),
        }
    }

    #[test]
    fn report_matches_direct_counting(
        rows in prop::collection::vec(prop::collection::vec(1u8..10, 3), 2..60),
        seed_labels in prop::collection::vec(0usize..3, 60),
    ) {
        let probs: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| {
                let s: f64 = r.iter().map(|&v| f64::from(v)).sum();
                r.iter().map(|&v| f64::from(v) / s).collect()
            })
            .collect();
        let labels = &seed_labels[..probs.len()];
        let m = compute_metrics(&table(&probs), labels).unwrap();
        for (got, want) in m.values().iter().zip(brute_metrics(&probs, labels)) {
            prop_assert!((got - want).abs() <= 1e-9, "{} vs {}", got, want);
        }
        prop_assert!(m.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
