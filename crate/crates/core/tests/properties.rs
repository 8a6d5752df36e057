use autopriv::gower::{gower_distance, k_smallest};
use autopriv::learning::auc;
use autopriv::linkattack::adjusted_risk;
use autopriv::riskprofile::qi_set_size;
use autopriv::scalar::fractional_ranks;
use proptest::prelude::*;

fn pairwise_rank(values: &[f64], i: usize) -> f64 {
    let less = values.iter().filter(|&&v| v < values[i]).count() as f64;
    let equal = values.iter().filter(|&&v| v == values[i]).count() as f64;
    less + (equal + 1.0) / 2.0
}

fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li == 1 && lj == 0 {
                pairs += 1.0;
                wins += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    wins / pairs
}

fn small_values(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    // few distinct levels so ties are common
    prop::collection::vec((0i32..6).prop_map(f64::from), 1..max_len)
}

proptest! {
    #[test]
    fn ranks_match_pairwise_counts(values in small_values(40)) {
        let r = fractional_ranks(&values);
        let n = values.len() as f64;
        prop_assert!((r.iter().sum::<f64>() - n * (n + 1.0) / 2.0).abs() < 1e-9);
        for i in 0..values.len() {
            prop_assert_eq!(r[i], pairwise_rank(&values, i));
        }
    }

    #[test]
    fn auc_matches_pair_counting(
        rows in prop::collection::vec(((0i32..8).prop_map(f64::from), 0u8..2), 2..60)
    ) {
        let (scores, labels): (Vec<f64>, Vec<u8>) = rows.into_iter().unzip();
        prop_assume!(labels.contains(&0) && labels.contains(&1));
        let a = auc(&scores, &labels).unwrap();
        prop_assert!((a - pairwise_auc(&scores, &labels)).abs() < 1e-12);
        let flipped: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert!((auc(&flipped, &labels).unwrap() - (1.0 - a)).abs() < 1e-12);
    }

    #[test]
    fn gower_is_a_bounded_symmetric_dissimilarity(
        cols in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0, 0.0f64..1.0), 0..6),
        cats in prop::collection::vec((0u32..3, 0u32..3), 0..6),
    ) {
        prop_assume!(!cols.is_empty() || !cats.is_empty());
        // ranges that cover both values, so each scaled gap is at most 1
        let inv: Vec<f64> = cols
            .iter()
            .map(|&(a, b, pad)| 1.0 / ((a - b).abs() + pad + 1e-3))
            .collect();
        let a_num: Vec<f64> = cols.iter().map(|c| c.0).collect();
        let b_num: Vec<f64> = cols.iter().map(|c| c.1).collect();
        let a_cat: Vec<u32> = cats.iter().map(|c| c.0).collect();
        let b_cat: Vec<u32> = cats.iter().map(|c| c.1).collect();
        let ab = gower_distance(&inv, &a_num, &a_cat, &b_num, &b_cat);
        let ba = gower_distance(&inv, &b_num, &b_cat, &a_num, &a_cat);
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(gower_distance(&inv, &a_num, &a_cat, &a_num, &a_cat), 0.0);
    }

    #[test]
    fn k_smallest_matches_full_sort(d in prop::collection::vec((0i32..5).prop_map(f64::from), 0..30), k in 0usize..35) {
        let pairs: Vec<(f64, usize)> = d.iter().copied().zip(0..).collect();
        let mut sorted = pairs.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let expect: Vec<usize> = sorted.iter().take(k).map(|p| p.1).collect();
        prop_assert_eq!(k_smallest(pairs, k), expect);
    }

    #[test]
    fn adjusted_risk_is_a_clamped_rate(naive in 0.0f64..=1.0, control in 0.0f64..=1.0) {
        let r = adjusted_risk(naive, control);
        prop_assert!((0.0..=1.0).contains(&r));
        if naive <= control {
            prop_assert_eq!(r, 0.0);
        }
    }

    #[test]
    fn qi_size_rounds_half_up(p in 1usize..200, pct in 1u32..100) {
        let f = f64::from(pct) / 100.0;
        let expect = ((p as f64 * f + 0.5).floor() as usize).clamp(1, p);
        prop_assert_eq!(qi_set_size(p, f), expect);
    }
}
