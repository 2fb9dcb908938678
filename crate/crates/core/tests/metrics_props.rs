use proptest::prelude::*;
use shapeqa_core::metrics::{mae, pearson, spearman, std_residual};

// Textbook two-pass formulas, kept independent of the library code.
fn naive_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    100.0 * cov / (va * vb).sqrt()
}

fn naive_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let below = v.iter().filter(|y| *y < x).count() as f64;
            let equal = v.iter().filter(|y| *y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (3usize..40).prop_flat_map(|n| {
        (prop::collection::vec(0.0f64..1.0, n), prop::collection::vec(0.0f64..1.0, n))
    })
}

fn spread(v: &[f64]) -> bool {
    v.iter().any(|x| (x - v[0]).abs() > 1e-6)
}

proptest! {
    #[test]
    fn pearson_matches_naive((a, b) in pair()) {
        prop_assume!(spread(&a) && spread(&b));
        prop_assert!((pearson(&a, &b).unwrap() - naive_pearson(&a, &b)).abs() < 1e-9);
    }

    #[test]
    fn spearman_matches_naive((a, b) in pair()) {
        let a: Vec<f64> = a.iter().map(|x| (x * 5.0).round()).collect();
        prop_assume!(spread(&a) && spread(&b));
        let want = naive_pearson(&naive_ranks(&a), &naive_ranks(&b));
        prop_assert!((spearman(&a, &b).unwrap() - want).abs() < 1e-9);
    }

    #[test]
    fn correlations_are_affine_invariant((a, b) in pair(), scale in 0.1f64..10.0, shift in -5.0f64..5.0) {
        prop_assume!(spread(&a) && spread(&b));
        let t: Vec<f64> = a.iter().map(|x| scale * x + shift).collect();
        prop_assert!((pearson(&t, &b).unwrap() - pearson(&a, &b).unwrap()).abs() < 1e-7);
        prop_assert!((spearman(&t, &b).unwrap() - spearman(&a, &b).unwrap()).abs() < 1e-9);
        let neg: Vec<f64> = a.iter().map(|x| -x).collect();
        prop_assert!((pearson(&neg, &b).unwrap() + pearson(&a, &b).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn errors_follow_translation((a, b) in pair(), shift in -1.0f64..1.0) {
        let t: Vec<f64> = a.iter().map(|x| x + shift).collect();
        let s0 = std_residual(&a, &b).unwrap();
        prop_assert!((std_residual(&t, &b).unwrap() - s0).abs() < 1e-7);
        // shifting predictions by c changes the MAE by at most |c|·100
        prop_assert!((mae(&t, &b).unwrap() - mae(&a, &b).unwrap()).abs() <= 100.0 * shift.abs() + 1e-9);
        let bias = a.iter().zip(&b).map(|(x, y)| x - y).sum::<f64>() / a.len() as f64;
        prop_assert!(mae(&a, &b).unwrap() + 1e-9 >= 100.0 * bias.abs());
        prop_assert!(mae(&a, &a).unwrap() == 0.0);
    }
}
