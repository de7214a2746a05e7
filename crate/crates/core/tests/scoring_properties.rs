mod common;

use bliss_core::bank::{attach_dictionary, build_bank, Dictionary};
use bliss_core::math::{l2_normalize, EmbeddingMatrix};
use bliss_core::scoring::{
    biased_score, bliss_score, external_text_score, internal_class_score, knn_score, score_batch, Method,
    ScoringConfig,
};
use common::{fixture, naive_moments, naive_sim, rng, sort_topk, unit_matrix};
use proptest::prelude::*;

const EPS: f64 = 1e-8;

#[test]
fn external_score_matches_nested_loop_oracle() {
    let f = fixture(11, 4, 25, 50, 20, 16);
    let cfg = ScoringConfig::default();
    for z in f.test.rows() {
        let sims: Vec<f64> = f.dict.embeddings().rows().map(|d| naive_sim(z, d)).collect();
        let top = sort_topk(&sims, cfg.k);
        for (c, class) in f.class_names.iter().enumerate() {
            let mut acc = 0.0;
            for &j in &top {
                let d = f.dict.embeddings().row(j);
                let per: Vec<f64> = f.bank.train_embs(c).rows().map(|x| naive_sim(x, d)).collect();
                let (m, s) = naive_moments(&per);
                acc += (sims[j] - m) / (s + EPS);
            }
            let (et, ids) = external_text_score(z, &f.bank, class, &f.dict, &cfg).unwrap();
            assert!((et - acc / cfg.k as f64).abs() < 1e-9, "{et} vs {}", acc / cfg.k as f64);
            let want: Vec<&str> = top.iter().map(|&j| f.dict.ids()[j].as_str()).collect();
            assert_eq!(ids, want);
        }
    }
}

#[test]
fn biased_score_matches_loop_and_min() {
    let f = fixture(12, 5, 10, 20, 40, 12);
    let cfg = ScoringConfig::default();
    for z in f.test.rows() {
        let mut best = f64::INFINITY;
        for c in 0..f.class_names.len() {
            let label = f.class_text.row(c);
            let per: Vec<f64> = f.bank.train_embs(c).rows().map(|x| naive_sim(x, label)).collect();
            let (m, s) = naive_moments(&per);
            best = best.min(-(naive_sim(z, label) - m) / (s + EPS));
        }
        assert!((biased_score(z, &f.bank, &cfg).unwrap() - best).abs() < 1e-9);
    }
}

#[test]
fn knn_matches_sort_oracle() {
    let f = fixture(13, 3, 15, 10, 30, 8);
    for k in [1, 5, 45] {
        for z in f.test.rows() {
            let mut d: Vec<f64> = f.train.rows().map(|x| 1.0 - naive_sim(z, x)).collect();
            d.sort_by(f64::total_cmp);
            let want = d[..k].iter().sum::<f64>() / k as f64;
            assert!((knn_score(z, &f.bank, k).unwrap() - want).abs() < 1e-12);
        }
    }
    assert!(knn_score(f.test.row(0), &f.bank, 46).is_err());
}

#[test]
fn internal_scores_standardize_own_class() {
    for seed in 0..10 {
        let f = fixture(100 + seed, 3, 40, 10, 1, 10);
        let cfg = ScoringConfig::default();
        for (c, class) in f.class_names.iter().enumerate() {
            let ic: Vec<f64> = f
                .bank
                .train_embs(c)
                .rows()
                .map(|x| internal_class_score(x, &f.bank, class, &cfg).unwrap())
                .collect();
            let (m, s) = naive_moments(&ic);
            assert!(m.abs() < 1e-6);
            assert!((s - 1.0).abs() < 1e-3);
        }
    }
}

#[test]
fn duplicated_dictionary_entries_are_harmless() {
    let f = fixture(14, 3, 20, 30, 10, 12);
    let e = f.dict.embeddings();
    let mut ids = e.ids().to_vec();
    let mut data = e.as_slice().to_vec();
    for i in 0..e.len() {
        ids.push(format!("{}_copy", e.ids()[i]));
        data.extend_from_slice(e.row(i));
    }
    let doubled = Dictionary::from_embeddings(EmbeddingMatrix::new(ids, e.dim(), data).unwrap()).unwrap();
    let bank = attach_dictionary(f.bank.clone(), &doubled).unwrap();
    // an even K picks each of the K/2 best entries exactly twice
    let cfg = ScoringConfig { k: 10, ..ScoringConfig::default() };
    let half = ScoringConfig { k: 5, ..cfg };
    for z in f.test.rows() {
        let a = bliss_score(z, &bank, &doubled, &cfg).unwrap().score;
        let b = bliss_score(z, &f.bank, &f.dict, &half).unwrap().score;
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn batch_equals_sequential_for_every_method() {
    let f = fixture(15, 4, 20, 60, 120, 16);
    let cfg = ScoringConfig::default();
    let bliss = score_batch(&f.test, &f.bank, Some(&f.dict), &cfg, Method::Bliss).unwrap();
    let biased = score_batch(&f.test, &f.bank, None, &cfg, Method::Biased).unwrap();
    let knn = score_batch(&f.test, &f.bank, None, &cfg, Method::Knn).unwrap();
    for (i, z) in f.test.rows().enumerate() {
        let one = bliss_score(z, &f.bank, &f.dict, &cfg).unwrap();
        assert!((bliss[i].score - one.score).abs() < 1e-9);
        assert_eq!(bliss[i].argmin_class, one.argmin_class);
        assert_eq!(bliss[i].topk_dict_ids, one.topk_dict_ids);
        assert_eq!(bliss[i].sample_id, f.test.ids()[i]);
        assert!((biased[i].score - biased_score(z, &f.bank, &cfg).unwrap()).abs() < 1e-9);
        assert!((knn[i].score - knn_score(z, &f.bank, cfg.k_nn).unwrap()).abs() < 1e-9);
    }
}

#[test]
fn batch_commutes_with_row_permutation() {
    let f = fixture(16, 3, 20, 40, 50, 12);
    let cfg = ScoringConfig::default();
    let order: Vec<usize> = (0..f.test.len()).rev().collect();
    let shuffled = f.test.select(&order).unwrap();
    let a = score_batch(&f.test, &f.bank, Some(&f.dict), &cfg, Method::Bliss).unwrap();
    let b = score_batch(&shuffled, &f.bank, Some(&f.dict), &cfg, Method::Bliss).unwrap();
    for (j, &i) in order.iter().enumerate() {
        assert_eq!(a[i], b[j]);
    }
}

#[test]
fn top_matches_do_not_depend_on_class() {
    let f = fixture(17, 4, 10, 40, 10, 12);
    let cfg = ScoringConfig::default();
    for z in f.test.rows() {
        let first = external_text_score(z, &f.bank, &f.class_names[0], &f.dict, &cfg).unwrap().1;
        for c in &f.class_names[1..] {
            assert_eq!(external_text_score(z, &f.bank, c, &f.dict, &cfg).unwrap().1, first);
        }
    }
}

#[test]
fn dropping_a_losing_class_keeps_the_score() {
    let f = fixture(18, 4, 15, 30, 30, 12);
    let cfg = ScoringConfig::default();
    for z in f.test.rows() {
        let rec = bliss_score(z, &f.bank, &f.dict, &cfg).unwrap();
        let drop = f.class_names.iter().position(|c| *c != rec.argmin_class).unwrap();
        let keep: Vec<usize> = (0..f.class_names.len()).filter(|&c| c != drop).collect();
        let names: Vec<&String> = keep.iter().map(|&c| &f.class_names[c]).collect();
        let rows: Vec<usize> = (0..f.train.len()).filter(|&i| f.train_labels[i] != f.class_names[drop]).collect();
        let labels: Vec<&String> = rows.iter().map(|&i| &f.train_labels[i]).collect();
        let bank = build_bank(&f.train.select(&rows).unwrap(), &labels, &f.class_text.select(&keep).unwrap(), &names)
            .unwrap();
        let bank = attach_dictionary(bank, &f.dict).unwrap();
        let again = bliss_score(z, &bank, &f.dict, &cfg).unwrap();
        assert_eq!(again.score, rec.score);
        assert_eq!(again.argmin_class, rec.argmin_class);
    }
}

#[test]
fn moving_toward_a_label_lowers_its_internal_score() {
    let f = fixture(19, 3, 20, 10, 20, 12);
    let cfg = ScoringConfig::default();
    for z in f.test.rows() {
        let label = f.class_text.row(0);
        let mixed: Vec<f32> = z.iter().zip(label).map(|(a, b)| 0.5 * a + 0.5 * b).collect();
        let closer = l2_normalize(&mixed).unwrap();
        if naive_sim(&closer, label) > naive_sim(z, label) {
            let before = internal_class_score(z, &f.bank, "class_0", &cfg).unwrap();
            let after = internal_class_score(&closer, &f.bank, "class_0", &cfg).unwrap();
            assert!(after < before);
        }
    }
}

#[test]
fn rescaled_inputs_give_identical_scores() {
    let f = fixture(20, 3, 20, 30, 20, 16);
    let cfg = ScoringConfig::default();
    let mut r = rng(20);
    let raw = unit_matrix(&mut r, "x", 5, 16);
    for z in raw.rows() {
        let scaled: Vec<f32> = z.iter().map(|x| x * 4.0).collect();
        let back = l2_normalize(&scaled).unwrap();
        let a = bliss_score(z, &f.bank, &f.dict, &cfg).unwrap();
        let b = bliss_score(&back, &f.bank, &f.dict, &cfg).unwrap();
        assert!((a.score - b.score).abs() < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn zero_lambda_is_the_biased_score(seed in 0u64..10_000) {
        let f = fixture(seed, 3, 8, 20, 8, 8);
        let cfg = ScoringConfig::default().with_lambda(0.0);
        for z in f.test.rows() {
            let a = bliss_score(z, &f.bank, &f.dict, &cfg).unwrap().score;
            let b = biased_score(z, &f.bank, &cfg).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn score_is_the_minimum_of_the_class_combinations(seed in 0u64..10_000, lambda in 0.0f64..3.0) {
        let f = fixture(seed, 4, 6, 15, 6, 8);
        let cfg = ScoringConfig::default().with_lambda(lambda);
        for z in f.test.rows() {
            let rec = bliss_score(z, &f.bank, &f.dict, &cfg).unwrap();
            for (c, ic) in &rec.ic_per_class {
                let combined = ic + lambda * rec.et_per_class[c];
                prop_assert!((combined - rec.combined_per_class[c]).abs() < 1e-12);
                prop_assert!(rec.score <= combined);
            }
            prop_assert_eq!(rec.score, rec.combined_per_class[&rec.argmin_class]);
        }
    }
}
