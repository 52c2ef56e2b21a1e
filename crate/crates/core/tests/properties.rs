use std::io::Cursor;

use proptest::prelude::*;
use sdr_core::data::{parse_svmlight, write_svmlight};
use sdr_core::distill::{sdr_loss, transform_scores};
use sdr_core::metrics::{discount, gain, ndcg_at_k};
use sdr_core::model::ScoringModel;
use sdr_core::rng;
use sdr_core::{Dataset, DistillSpec, LossKind, QueryList, TransformSpec};

fn labels(n: impl Into<prop::collection::SizeRange>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0u8..=4).prop_map(f64::from), n)
}

fn list(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..=max).prop_flat_map(|n| (labels(n), prop::collection::vec(-10.0f64..10.0, n)))
}

/// Sorts index lists explicitly and sums gains over discounts in rank order.
fn brute_ndcg(s: &[f64], y: &[f64], k: usize) -> f64 {
    let n = s.len();
    let mut by_score: Vec<usize> = (0..n).collect();
    by_score.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap().then(a.cmp(&b)));
    let mut by_label: Vec<usize> = (0..n).collect();
    by_label.sort_by(|&a, &b| y[b].partial_cmp(&y[a]).unwrap().then(a.cmp(&b)));
    let term = |r: usize, doc: usize| (2f64.powf(y[doc]) - 1.0) / ((r + 2) as f64).log2();
    let mut d = 0.0;
    let mut ideal = 0.0;
    for r in 0..n.min(k) {
        d += term(r, by_score[r]);
        ideal += term(r, by_label[r]);
    }
    if ideal <= 0.0 {
        0.0
    } else {
        d / ideal
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn translation_invariance((y, s) in list(20), w in -100.0f64..100.0) {
        for kind in [LossKind::RankNet, LossKind::Softmax] {
            let base = kind.value(&y, &s).unwrap();
            let shifted: Vec<f64> = s.iter().map(|v| v + w).collect();
            let diff = (kind.value(&y, &shifted).unwrap() - base).abs();
            prop_assert!(diff <= 1e-9 * (1.0 + base.abs()), "{kind}: {diff:e}");
        }
    }

    #[test]
    fn ndcg_matches_brute_force((y, s) in list(8), k in 1usize..=10) {
        let v = ndcg_at_k(&s, &y, k);
        let b = brute_ndcg(&s, &y, k);
        prop_assert!((v - b).abs() <= 1e-12, "{v} vs {b}");
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn ndcg_ignores_positive_affine_maps((y, s) in list(12), a in 0.1f64..10.0, b in -10.0f64..10.0, k in 1usize..=10) {
        let mapped: Vec<f64> = s.iter().map(|v| a * v + b).collect();
        prop_assert_eq!(ndcg_at_k(&mapped, &y, k), ndcg_at_k(&s, &y, k));
    }

    #[test]
    fn ideal_order_scores_one(y in labels(1..12usize), k in 1usize..=12) {
        prop_assume!(y.iter().any(|&v| v > 0.0));
        prop_assert_eq!(ndcg_at_k(&y, &y, k), 1.0);
    }

    #[test]
    fn sdr_loss_is_linear_in_alpha((y, s) in list(20), t in prop::collection::vec(-5.0f64..5.0, 20), alpha in 0.0f64..=1.0) {
        let t = transform_scores(&TransformSpec::Affine { a: 1.0, b: 1.0 }, &t[..s.len()]);
        let at = |a: f64| sdr_loss(&y, &t, &s, &DistillSpec::listwise(a, TransformSpec::default())).unwrap();
        let (v0, g0) = at(0.0);
        let (v1, g1) = at(1.0);
        let (v, g) = at(alpha);
        prop_assert!((v - ((1.0 - alpha) * v0 + alpha * v1)).abs() <= 1e-12 * (1.0 + v.abs()));
        prop_assert!((v0 - LossKind::Softmax.value(&y, &s).unwrap()).abs() <= 1e-12);
        prop_assert!((v1 - LossKind::Softmax.value(&t, &s).unwrap()).abs() <= 1e-12);
        for i in 0..s.len() {
            prop_assert!((g[i] - ((1.0 - alpha) * g0[i] + alpha * g1[i])).abs() <= 1e-12);
        }
    }

    #[test]
    fn softmax_transform_absorbs_teacher_shift((y, s) in list(20), t in prop::collection::vec(-5.0f64..5.0, 20), c in -50.0f64..50.0, temp in 0.1f64..5.0) {
        let t = &t[..s.len()];
        let shifted: Vec<f64> = t.iter().map(|v| v + c).collect();
        let spec = DistillSpec::listwise(0.5, TransformSpec::Softmax { temperature: temp });
        let a = sdr_loss(&y, &spec.transform.apply(t), &s, &spec).unwrap().0;
        let b = sdr_loss(&y, &spec.transform.apply(&shifted), &s, &spec).unwrap().0;
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn transforms_preserve_order(t in prop::collection::vec(-5.0f64..5.0, 2..20), a in 0.1f64..5.0, b in -2.0f64..2.0, temp in 0.1f64..5.0) {
        let affine = TransformSpec::Affine { a, b }.apply(&t);
        let soft = TransformSpec::Softmax { temperature: temp }.apply(&t);
        for i in 0..t.len() {
            for j in 0..t.len() {
                if t[i] > t[j] {
                    prop_assert!(soft[i] >= soft[j]);
                    if a * t[j] + b > 0.0 {
                        prop_assert!(affine[i] > affine[j]);
                    }
                }
                if a * t[i] + b <= 0.0 && a * t[j] + b <= 0.0 {
                    prop_assert_eq!(affine[i], affine[j]);
                }
            }
        }
    }

    #[test]
    fn scoring_is_permutation_equivariant(seed in any::<u64>(), n in 1usize..10, perm_seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let model = ScoringModel::init(&[3, 5, 4, 1], seed).unwrap();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 * 0.3, (i as f64).sin(), 1.0 - i as f64 * 0.1]).collect();
        let ql = QueryList::from_rows("q", &rows, vec![0.0; n]);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::seeded(perm_seed));
        let s = model.score(&ql).unwrap();
        let sp = model.score(&ql.permuted(&order)).unwrap();
        for (pos, &src) in order.iter().enumerate() {
            prop_assert_eq!(sp[pos], s[src]);
        }
    }

    #[test]
    fn svmlight_round_trip(
        queries in prop::collection::vec(
            (1usize..6).prop_flat_map(|n| (labels(n), prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 4), n))),
            1..5,
        )
    ) {
        let qs: Vec<QueryList> = queries
            .iter()
            .enumerate()
            .map(|(i, (y, rows))| QueryList::from_rows(format!("q{i}"), rows, y.clone()))
            .collect();
        let ds = Dataset::new("rt", 4, qs);
        let mut text = Vec::new();
        write_svmlight(&ds, &mut text).unwrap();
        let back = parse_svmlight(Cursor::new(text), "rt").unwrap();
        // Trailing all-zero feature columns cannot be recovered from sparse text.
        if back.feature_count() == 4 {
            prop_assert_eq!(back, ds);
        } else {
            prop_assert!(back.feature_count() < 4);
        }
    }
}

#[test]
fn non_invariant_losses_move_under_shift() {
    let y = [1.0, 0.0, 1.0, 0.0];
    let s = [0.2, -0.4, 0.9, 0.1];
    for kind in [LossKind::Mse, LossKind::PointwiseLogistic] {
        let base = kind.value(&y, &s).unwrap();
        let shifted: Vec<f64> = s.iter().map(|v| v + 1.0).collect();
        assert!((kind.value(&y, &shifted).unwrap() - base).abs() > 1e-3, "{kind}");
    }
}

#[test]
fn ranknet_zero_iff_no_ordered_pair() {
    assert_eq!(LossKind::RankNet.value(&[2.0, 2.0, 2.0], &[0.5, -1.0, 3.0]).unwrap(), 0.0);
    assert!(LossKind::RankNet.value(&[2.0, 1.0], &[5.0, -5.0]).unwrap() > 0.0);
}

#[test]
fn metric_building_blocks() {
    assert_eq!(gain(0.0), 0.0);
    assert_eq!(gain(3.0), 7.0);
    assert_eq!(discount(1), 1.0);
    assert_eq!(discount(3), 2.0);
}
