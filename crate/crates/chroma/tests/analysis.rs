use std::collections::BTreeMap;

use chroma_core::analysis::{class_count_report, confidence_report, EvalReport};
use chroma_core::train::{Evaluation, Prediction};
use chroma_core::Rng;
use statrs::distribution::{Binomial, DiscreteCDF};

/// Random predictions: correct with probability `p_correct`, max-prob in [0.1, 1].
fn predictions(n: usize, p_correct: f64, seed: u64) -> Vec<Prediction> {
    let mut rng = Rng::new(seed);
    (0..n)
        .map(|_| {
            let label = rng.below(10) as u8;
            let predicted = if rng.next_f64() < p_correct { label } else { ((label as u64 + 1 + rng.below(9)) % 10) as u8 };
            Prediction { label, predicted, max_prob: 0.1 + 0.9 * rng.next_f64() }
        })
        .collect()
}

#[test]
fn weighted_class_rates_equal_accuracy() {
    for seed in 0..20 {
        let preds = predictions(1000 + seed as usize * 37, 0.3 + 0.03 * seed as f64, seed);
        let accuracy = preds.iter().filter(|p| p.correct()).count() as f64 / preds.len() as f64;
        let counts = class_count_report("m", "d", &preds);
        let total: usize = counts.iter().map(|c| c.total).sum();
        assert_eq!(total, preds.len());
        let weighted: f64 = counts
            .iter()
            .filter(|c| c.total > 0)
            .map(|c| (c.correct as f64 / c.total as f64) * (c.total as f64 / total as f64))
            .sum();
        assert!((weighted - accuracy).abs() < 1e-6);
        assert!(counts.iter().all(|c| c.correct <= c.total));
    }
}

#[test]
fn confidence_matches_brute_force() {
    for seed in 0..20 {
        let preds = predictions(2000, 0.6, 100 + seed);
        let report = confidence_report("m", "d", &preds);
        let mut buckets: BTreeMap<(u8, bool), Vec<f64>> = BTreeMap::new();
        for p in &preds {
            buckets.entry((p.label, p.correct())).or_default().push(p.max_prob);
        }
        for e in &report {
            for (correct, got) in [(true, e.correct), (false, e.incorrect)] {
                match buckets.get(&(e.class, correct)) {
                    Some(v) => {
                        let mean = v.iter().sum::<f64>() / v.len() as f64;
                        assert!((got.unwrap() - mean).abs() < 1e-9);
                    }
                    None => assert_eq!(got, None),
                }
            }
        }
    }
}

#[test]
fn chance_model_counts_within_binomial_interval() {
    let preds = predictions(10_000, 0.1, 7);
    for c in class_count_report("m", "d", &preds) {
        let b = Binomial::new(0.1, c.total as u64).unwrap();
        let (lo, hi) = (b.inverse_cdf(0.005), b.inverse_cdf(0.995));
        assert!((lo..=hi).contains(&(c.correct as u64)), "class {} correct {} not in [{lo}, {hi}]", c.class, c.correct);
    }
}

#[test]
fn perfect_model_counts() {
    let preds: Vec<Prediction> =
        (0..500).map(|i| Prediction { label: (i % 10) as u8, predicted: (i % 10) as u8, max_prob: 1.0 }).collect();
    let mut report = EvalReport::default();
    report.push_cell("m", "d", &Evaluation { accuracy: 1.0, predictions: preds });
    assert!(report.class_counts.iter().all(|c| c.correct == c.total && c.total == 50));
    assert!(report.confidence.iter().all(|e| e.correct == Some(1.0) && e.incorrect.is_none()));
    assert_eq!(report.matrix.len(), 1);
}
