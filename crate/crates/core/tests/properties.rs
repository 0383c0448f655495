mod common;

use std::collections::HashMap;

use proptest::prelude::*;
use sfdialog::eval::{compute_metrics, rank_of_gt};
use sfdialog::nn::softmax_cross_entropy;
use sfdialog::text::{detokenize, tokenize, ImageFeatureStore};
use sfdialog::unroll::nearest_images;
use sfdialog::visdialq::{compute_popular, find_plausible, QaRef};

use common::oracle_rank;

fn scores_and_gt() -> impl Strategy<Value = (Vec<f64>, usize)> {
    prop::collection::vec(prop_oneof![(-4i32..4).prop_map(f64::from), -10.0..10.0f64], 1..40)
        .prop_flat_map(|s| {
            let k = s.len();
            (Just(s), 0..k)
        })
}

proptest! {
    #[test]
    fn rank_matches_sort_oracle((scores, gt) in scores_and_gt()) {
        prop_assert_eq!(rank_of_gt(&scores, gt).unwrap(), oracle_rank(&scores, gt));
    }

    #[test]
    fn rank_is_invariant_under_monotone_maps((scores, gt) in scores_and_gt(), a in 0.1..5.0f64, b in -3.0..3.0f64) {
        let r = rank_of_gt(&scores, gt).unwrap();
        let affine: Vec<f64> = scores.iter().map(|s| a * s + b).collect();
        let cubed: Vec<f64> = scores.iter().map(|s| s * s * s).collect();
        prop_assert_eq!(rank_of_gt(&affine, gt).unwrap(), r);
        prop_assert_eq!(rank_of_gt(&cubed, gt).unwrap(), r);
        prop_assert!((1..=scores.len()).contains(&r));
    }

    #[test]
    fn rank_ignores_option_order((scores, gt) in scores_and_gt(), rot in 0usize..40) {
        let k = scores.len();
        let rot = rot % k;
        let mut moved = scores.clone();
        moved.rotate_left(rot);
        let new_gt = (gt + k - rot) % k;
        prop_assert_eq!(rank_of_gt(&moved, new_gt).unwrap(), rank_of_gt(&scores, gt).unwrap());
    }

    #[test]
    fn metrics_stay_in_bounds(ranks in prop::collection::vec(1usize..=100, 1..200)) {
        let m = compute_metrics(&ranks, 100).unwrap();
        prop_assert!(m.mrr > 0.0 && m.mrr <= 1.0);
        prop_assert!(m.r_at_1 <= m.r_at_5 && m.r_at_5 <= m.r_at_10 && m.r_at_10 <= 100.0);
        prop_assert!(m.mrr >= m.r_at_1 / 100.0);
        prop_assert!((1.0..=100.0).contains(&m.mean_rank));
        prop_assert_eq!(m.n, ranks.len());
    }

    #[test]
    fn recall_at_10_is_total_for_ten_options(ranks in prop::collection::vec(1usize..=10, 1..100)) {
        prop_assert_eq!(compute_metrics(&ranks, 10).unwrap().r_at_10, 100.0);
    }

    #[test]
    fn cross_entropy_gradient_is_softmax_minus_one_hot((scores, gt) in scores_and_gt()) {
        let (loss, grad) = softmax_cross_entropy(&scores, gt).unwrap();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = scores.iter().map(|s| (s - max).exp()).sum();
        prop_assert!((loss - (z.ln() + max - scores[gt])).abs() < 1e-10);
        prop_assert!(loss >= 0.0);
        for (j, g) in grad.iter().enumerate() {
            let p = (scores[j] - max).exp() / z;
            let want = if j == gt { p - 1.0 } else { p };
            prop_assert!((g - want).abs() < 1e-12);
        }
    }

    #[test]
    fn normalisation_is_idempotent(s in "[A-Za-z?,.!' ]{0,40}") {
        let once = detokenize(&tokenize(&s));
        prop_assert_eq!(detokenize(&tokenize(&once)), once);
    }

    #[test]
    fn popular_matches_counting_oracle(words in prop::collection::vec("[abc]{1,2}", 0..60), m in 0usize..8) {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for w in &words {
            *counts.entry(w).or_default() += 1;
        }
        let mut want: Vec<(&str, usize)> = counts.into_iter().collect();
        want.sort_by_key(|&(w, c)| (std::cmp::Reverse(c), w));
        let want: Vec<String> = want.into_iter().take(m).map(|(w, _)| w.to_owned()).collect();
        prop_assert_eq!(compute_popular(words.iter().map(String::as_str), m), want);
    }

    #[test]
    fn plausible_matches_brute_force(
        keys in prop::collection::vec((1u64..6, 1usize..=10, prop::collection::vec(-2i8..3, 3)), 1..60),
        query in prop::collection::vec(-2i8..3, 3),
        image in 1u64..6,
        k in 1usize..20,
    ) {
        let mut corpus: Vec<(QaRef, Vec<f64>)> = Vec::new();
        for (i, r, v) in keys {
            let q = QaRef { image_id: i, round: r };
            if corpus.iter().all(|(c, _)| *c != q) {
                corpus.push((q, v.into_iter().map(f64::from).collect()));
            }
        }
        let query: Vec<f64> = query.into_iter().map(f64::from).collect();
        let mut want: Vec<(f64, u64, usize)> = corpus
            .iter()
            .filter(|(r, _)| r.image_id != image && r.round != 10)
            .map(|(r, v)| (v.iter().zip(&query).map(|(a, b)| (a - b).abs().powi(2)).sum::<f64>().sqrt(), r.image_id, r.round))
            .collect();
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let want: Vec<QaRef> = want.into_iter().take(k).map(|(_, i, r)| QaRef { image_id: i, round: r }).collect();
        prop_assert_eq!(find_plausible(&query, image, &corpus, k), want);
    }

    #[test]
    fn nearest_images_match_cosine_oracle(
        vecs in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 4), 2..20),
        dup in prop::collection::vec(0usize..20, 0..5),
        n in 1usize..25,
    ) {
        let mut rows = vecs.clone();
        for d in dup {
            rows.push(vecs[d % vecs.len()].clone());
        }
        let mut store = ImageFeatureStore::new(4);
        for (i, v) in rows.iter().enumerate() {
            store.insert(i as u64 + 1, v.clone()).unwrap();
        }
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let cos = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (norm(a) * norm(b));
        let q = &rows[0];
        let mut want: Vec<(u64, f64)> = rows
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, v)| (i as u64 + 1, if v == q { f64::INFINITY } else { cos(v, q) }))
            .collect();
        want.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let want: Vec<u64> = want.into_iter().take(n).map(|(id, _)| id).collect();
        prop_assert_eq!(nearest_images(&store, 1, n).unwrap(), want);
    }
}

#[test]
fn zero_feature_vectors_are_rejected_at_insert() {
    let mut store = ImageFeatureStore::new(2);
    assert!(store.insert(1, vec![0.0, 0.0]).is_err());
    assert!(store.insert(1, vec![f64::NAN, 1.0]).is_err());
    store.insert(1, vec![3.0, 4.0]).unwrap();
    assert_eq!(store.get(1).unwrap(), &[0.6, 0.8]);
}
