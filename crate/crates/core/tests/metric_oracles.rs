mod common;

use bliss_core::eval::{auroc, avg_dict_similarity, fpr_at_tpr, lambda_sweep, LabeledScores};
use bliss_core::scoring::{score_batch, Method, ScoringConfig};
use common::{fixture, naive_sim};
use proptest::prelude::*;

fn pair_oracle(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &a) in scores.iter().enumerate() {
        for (j, &b) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                if a > b {
                    wins += 1.0;
                } else if a == b {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

fn sweep_oracle(scores: &[f64], labels: &[bool], target: f64) -> f64 {
    let n1 = labels.iter().filter(|&&l| l).count() as f64;
    let n0 = labels.len() as f64 - n1;
    let mut thresholds = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    for t in thresholds {
        let tp = scores.iter().zip(labels).filter(|(&s, &l)| l && s >= t).count() as f64;
        if tp / n1 >= target {
            let fp = scores.iter().zip(labels).filter(|(&s, &l)| !l && s >= t).count() as f64;
            return fp / n0;
        }
    }
    unreachable!("the lowest threshold flags everything")
}

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..80).prop_flat_map(|n| {
        let scores = prop::collection::vec((0i32..12).prop_map(|v| f64::from(v) / 4.0), n);
        // both classes are always present
        let labels = prop::collection::vec(any::<bool>(), n).prop_map(|mut l| {
            l[0] = true;
            l[1] = false;
            l
        });
        (scores, labels)
    })
}

proptest! {
    #[test]
    fn auroc_matches_pair_counting((scores, labels) in instance()) {
        let ls = LabeledScores::new(scores.clone(), labels.clone()).unwrap();
        prop_assert!((auroc(&ls).unwrap() - pair_oracle(&scores, &labels)).abs() < 1e-12);
    }

    #[test]
    fn fpr_matches_threshold_sweep((scores, labels) in instance(), target in 0.01f64..=1.0) {
        let ls = LabeledScores::new(scores.clone(), labels.clone()).unwrap();
        prop_assert_eq!(fpr_at_tpr(&ls, target).unwrap(), sweep_oracle(&scores, &labels, target));
    }

    #[test]
    fn negated_scores_flip_auroc((scores, labels) in instance()) {
        let a = auroc(&LabeledScores::new(scores.clone(), labels.clone()).unwrap()).unwrap();
        let neg = scores.iter().map(|s| -s).collect();
        let b = auroc(&LabeledScores::new(neg, labels).unwrap()).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn monotone_transforms_keep_metrics((scores, labels) in instance()) {
        let ls = LabeledScores::new(scores.clone(), labels.clone()).unwrap();
        let moved = LabeledScores::new(scores.iter().map(|s| (3.0 * s).exp() + 7.0).collect(), labels).unwrap();
        prop_assert_eq!(auroc(&ls).unwrap(), auroc(&moved).unwrap());
        prop_assert_eq!(fpr_at_tpr(&ls, 0.95).unwrap(), fpr_at_tpr(&moved, 0.95).unwrap());
    }

    #[test]
    fn lower_tpr_never_costs_more_fpr((scores, labels) in instance()) {
        let ls = LabeledScores::new(scores, labels).unwrap();
        prop_assert!(fpr_at_tpr(&ls, 0.90).unwrap() <= fpr_at_tpr(&ls, 0.95).unwrap());
    }
}

#[test]
fn sweep_equals_independent_runs() {
    let f = fixture(30, 3, 20, 40, 60, 12);
    let labels: Vec<bool> = (0..60).map(|i| i % 3 == 0).collect();
    let base = ScoringConfig::default();
    let lambdas = [0.0, 0.1, 0.5, 0.75, 2.0];
    let rows = lambda_sweep(&f.test, &labels, &f.bank, &f.dict, &base, &lambdas).unwrap();
    for (row, &l) in rows.iter().zip(&lambdas) {
        let recs = score_batch(&f.test, &f.bank, Some(&f.dict), &base.with_lambda(l), Method::Bliss).unwrap();
        let ls = LabeledScores::new(recs.iter().map(|r| r.score).collect(), labels.clone()).unwrap();
        assert_eq!(row.lambda, l);
        assert!((row.report.auroc - auroc(&ls).unwrap()).abs() < 1e-9);
        assert!((row.report.fpr95 - fpr_at_tpr(&ls, 0.95).unwrap()).abs() < 1e-9);
    }
}

#[test]
fn avg_dict_similarity_matches_loop() {
    let f = fixture(31, 2, 5, 70, 10, 12);
    for z in f.test.rows() {
        let want = f.dict.embeddings().rows().map(|d| naive_sim(z, d)).sum::<f64>() / 70.0;
        assert!((avg_dict_similarity(z, &f.dict).unwrap() - want).abs() < 1e-12);
    }
}
