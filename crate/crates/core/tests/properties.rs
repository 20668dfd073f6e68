use proptest::prelude::*;

use dpu_core::data::split;
use dpu_core::estimator::{assign_bucket, fit_buckets};
use dpu_core::features::binarize;
use dpu_core::metrics::{pearson_sq, r2_score, roc_auc};
use dpu_core::nn::Tensor2D;
use dpu_core::uncertainty::{pu_kl, pu_std, PredictionKind, PredictionSet, PredictionSource};

fn source() -> PredictionSource {
    PredictionSource::McDropout {
        rate: 0.2,
        base_seed: 0,
    }
}

fn scalar_set(rows: &[Vec<f64>]) -> PredictionSet {
    let values: Vec<Vec<Vec<f64>>> = rows.iter().map(|r| r.iter().map(|&v| vec![v]).collect()).collect();
    PredictionSet::new(PredictionKind::Scalar, &values, source()).unwrap()
}

/// Rows of `n` positive weights normalized to distributions.
fn dist_set(raw: &[Vec<Vec<f64>>]) -> PredictionSet {
    let values: Vec<Vec<Vec<f64>>> = raw
        .iter()
        .map(|e| {
            e.iter()
                .map(|p| {
                    let s: f64 = p.iter().sum();
                    p.iter().map(|v| v / s).collect()
                })
                .collect()
        })
        .collect();
    PredictionSet::new(PredictionKind::Distribution, &values, source()).unwrap()
}

fn scalar_rows() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..12).prop_flat_map(|n| prop::collection::vec(prop::collection::vec(-10.0f64..10.0, n), 1..8))
}

fn dist_rows() -> impl Strategy<Value = Vec<Vec<Vec<f64>>>> {
    (2usize..10, 2usize..6).prop_flat_map(|(n, k)| {
        prop::collection::vec(prop::collection::vec(prop::collection::vec(0.01f64..1.0, k), n), 1..6)
    })
}

proptest! {
    #[test]
    fn pu_is_nonnegative(rows in scalar_rows(), dists in dist_rows()) {
        prop_assert!(pu_std(&scalar_set(&rows)).unwrap().scores.iter().all(|&v| v >= 0.0));
        prop_assert!(pu_kl(&dist_set(&dists)).unwrap().scores.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn pu_ignores_inference_order(rows in scalar_rows(), dists in dist_rows(), rot in 0usize..20) {
        let rotate = |v: &[f64]| { let mut v = v.to_vec(); let k = rot % v.len(); v.rotate_left(k); v };
        let a = pu_std(&scalar_set(&rows)).unwrap();
        let rotated: Vec<Vec<f64>> = rows.iter().map(|r| rotate(r)).collect();
        let b = pu_std(&scalar_set(&rotated)).unwrap();
        for (x, y) in a.scores.iter().zip(&b.scores) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
        }
        let a = pu_kl(&dist_set(&dists)).unwrap();
        let reversed: Vec<Vec<Vec<f64>>> = dists.iter().map(|e| e.iter().rev().cloned().collect()).collect();
        let b = pu_kl(&dist_set(&reversed)).unwrap();
        for (x, y) in a.scores.iter().zip(&b.scores) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn pu_std_scales_and_ignores_shifts(rows in scalar_rows(), c in -5.0f64..5.0, shift in -100.0f64..100.0) {
        let base = pu_std(&scalar_set(&rows)).unwrap();
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| c * v + shift).collect()).collect();
        let out = pu_std(&scalar_set(&scaled)).unwrap();
        for (x, y) in base.scores.iter().zip(&out.scores) {
            prop_assert!((c.abs() * x - y).abs() <= 1e-8 * (1.0 + y.abs() + shift.abs()));
        }
    }

    #[test]
    fn pu_of_subset_is_subset_of_pu(rows in scalar_rows(), pick in prop::collection::vec(any::<prop::sample::Index>(), 1..5)) {
        let idx: Vec<usize> = pick.iter().map(|i| i.index(rows.len())).collect();
        let full = pu_std(&scalar_set(&rows)).unwrap();
        let sub_rows: Vec<Vec<f64>> = idx.iter().map(|&i| rows[i].clone()).collect();
        prop_assert_eq!(pu_std(&scalar_set(&sub_rows)).unwrap().scores, full.select(&idx).scores);
    }

    #[test]
    fn identical_predictions_give_zero_pu(v in -5.0f64..5.0, n in 2usize..10, p in prop::collection::vec(0.01f64..1.0, 2..6)) {
        prop_assert_eq!(pu_std(&scalar_set(&[vec![v; n]])).unwrap().scores[0], 0.0);
        prop_assert_eq!(pu_kl(&dist_set(&[vec![p; n]])).unwrap().scores[0], 0.0);
    }

    #[test]
    fn auc_is_invariant_under_monotone_maps(
        pairs in prop::collection::vec((any::<bool>(), -3.0f64..3.0), 2..40)
    ) {
        let labels: Vec<bool> = pairs.iter().map(|p| p.0).collect();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let scores: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let mapped: Vec<f64> = scores.iter().map(|s| s.exp() * 3.0 + 1.0).collect();
        let a = roc_auc(&labels, &scores).unwrap();
        prop_assert!((a - roc_auc(&labels, &mapped).unwrap()).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
        let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
        prop_assert!((a + roc_auc(&flipped, &scores).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bucket_assignment_is_monotone(labels in prop::collection::vec(0.0f64..10.0, 10..60), a in 0.0f64..10.0, b in 0.0f64..10.0) {
        let bounds = fit_buckets(&labels, 5).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(assign_bucket(lo, &bounds) <= assign_bucket(hi, &bounds));
        prop_assert!(assign_bucket(hi, &bounds) < 5);
    }

    #[test]
    fn binarize_is_idempotent(v in prop::collection::vec(-2.0f64..2.0, 1..30)) {
        let t = Tensor2D::from_vec(1, v.len(), v).unwrap();
        let once = binarize(&t);
        prop_assert_eq!(binarize(&once), once.clone());
        prop_assert!(once.data().iter().all(|&x| x == 0.0 || x == 1.0));
    }

    #[test]
    fn split_partitions_the_examples(n in 20usize..300, seed in any::<u64>(), f in 0.2f64..0.8) {
        let plan = split(n, seed, [f, 1.0 - f]).unwrap();
        let mut all: Vec<usize> = plan.d_train.iter().chain(&plan.d_test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        let mut halves: Vec<usize> = plan.d_prime_train.iter().chain(&plan.d_prime_test).copied().collect();
        halves.sort_unstable();
        let mut test = plan.d_test.clone();
        test.sort_unstable();
        prop_assert_eq!(halves, test);
        prop_assert!(plan.d_prime_train.iter().all(|i| !plan.d_prime_test.contains(i)));
    }

    #[test]
    fn correlation_and_r2_bounds(pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..40)) {
        let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        if let (Ok(x), Ok(y)) = (pearson_sq(&a, &b), pearson_sq(&b, &a)) {
            prop_assert!((x - y).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&x));
            prop_assert!((pearson_sq(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        }
        if let Ok(r2) = r2_score(&a, &b) {
            prop_assert!(r2 <= 1.0);
        }
    }

    #[test]
    fn matmul_matches_naive_products(
        (m, k, n, a, b) in (1usize..6, 1usize..6, 1usize..6).prop_flat_map(|(m, k, n)| (
            Just(m), Just(k), Just(n),
            prop::collection::vec(-3.0f64..3.0, m * k),
            prop::collection::vec(-3.0f64..3.0, k * n),
        ))
    ) {
        let ta = Tensor2D::from_vec(m, k, a.clone()).unwrap();
        let tb = Tensor2D::from_vec(k, n, b.clone()).unwrap();
        let c = ta.matmul(&tb);
        for i in 0..m {
            for j in 0..n {
                let want: f64 = (0..k).map(|t| a[i * k + t] * b[t * n + j]).sum();
                prop_assert!((c.get(i, j) - want).abs() < 1e-12);
            }
        }
        let bt = Tensor2D::from_vec(n, k, (0..n * k).map(|x| tb.get(x % k, x / k)).collect()).unwrap();
        prop_assert_eq!(ta.matmul_t(&bt), c.clone());
        let at = Tensor2D::from_vec(k, m, (0..k * m).map(|x| ta.get(x % m, x / m)).collect()).unwrap();
        prop_assert_eq!(at.t_matmul(&tb), c);
    }
}
