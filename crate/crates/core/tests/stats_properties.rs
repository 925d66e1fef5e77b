mod common;

use common::{build, random_params, raw_samples, schema};
use ctrbias_core::analysis::variance_decomposition;
use ctrbias_core::model::Arch;
use ctrbias_core::stats::{ols_fit, pearson, spearman};
use proptest::prelude::*;

fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (3usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(-100.0f64..100.0, n),
            prop::collection::vec(-100.0f64..100.0, n),
        )
    })
}

/// Integer-valued pairs, so ties are common.
fn tied_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (3usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec((-5i32..5).prop_map(f64::from), n),
            prop::collection::vec((-5i32..5).prop_map(f64::from), n),
        )
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

proptest! {
    #[test]
    fn pearson_ignores_positive_affine_maps((x, y) in pair(), a in 0.1f64..10.0, b in -50.0f64..50.0) {
        let Ok(base) = pearson(&x, &y) else { return Ok(()) };
        let moved: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let r = pearson(&moved, &y).unwrap();
        prop_assert!((r.coefficient - base.coefficient).abs() <= 1e-9);
        let flipped: Vec<f64> = y.iter().map(|v| -v).collect();
        let r = pearson(&x, &flipped).unwrap();
        prop_assert!((r.coefficient + base.coefficient).abs() <= 1e-12);
    }

    #[test]
    fn spearman_ignores_monotone_maps((x, y) in tied_pair()) {
        let Ok(base) = spearman(&x, &y) else { return Ok(()) };
        let warped: Vec<f64> = x.iter().map(|v| v * v * v + 3.0 * v).collect();
        let squashed: Vec<f64> = y.iter().map(|v| (v / 3.0).tanh()).collect();
        let r = spearman(&warped, &squashed).unwrap();
        prop_assert_eq!(r.coefficient, base.coefficient);
        prop_assert_eq!(r.p_value, base.p_value);
    }

    #[test]
    fn ols_residuals_are_orthogonal((x, y) in pair()) {
        let Ok(fit) = ols_fit(&x, &y) else { return Ok(()) };
        let r = &fit.residuals;
        let scale = 1.0 + y.iter().map(|v| v.abs()).fold(0.0, f64::max);
        prop_assert!(r.iter().sum::<f64>().abs() <= 1e-9 * scale);
        let (mx, mr) = (mean(&x), mean(r));
        let cov: f64 = x.iter().zip(r).map(|(a, b)| (a - mx) * (b - mr)).sum();
        let sx = x.iter().map(|a| (a - mx) * (a - mx)).sum::<f64>().sqrt();
        let sr = r.iter().map(|b| (b - mr) * (b - mr)).sum::<f64>().sqrt();
        if sr > 1e-9 * scale {
            prop_assert!((cov / (sx * sr)).abs() <= 1e-9);
        }
    }

    #[test]
    fn part_variance_scales_quadratically(raw in raw_samples(3, 6, 4, 20..60), seed in any::<u64>()) {
        let s = schema(3, 6, 4);
        let d = build(&s, &raw);
        let mut p = random_params(&s, Arch::Fm, 3, &[], seed, 1.0);
        let Ok(before) = variance_decomposition(&p, &d, &s) else { return Ok(()) };
        // w -> 3w scales the linear part by 3, V -> sqrt(3) V the pairwise part by 3
        p.linear_mut().iter_mut().for_each(|w| *w *= 3.0);
        p.embeddings_mut().iter_mut().for_each(|v| *v *= 3f64.sqrt());
        let after = variance_decomposition(&p, &d, &s).unwrap();
        let pairs = [
            (before.linear_positive.variance, after.linear_positive.variance),
            (before.linear_negative.variance, after.linear_negative.variance),
            (before.high_order_positive.variance, after.high_order_positive.variance),
            (before.high_order_negative.variance, after.high_order_negative.variance),
        ];
        for (b, a) in pairs {
            prop_assert!((a - 9.0 * b).abs() <= 1e-9 * (1.0 + a.abs()), "{a} vs 9 * {b}");
        }
    }

    #[test]
    fn identical_group_means_have_zero_variance(raw in raw_samples(3, 6, 4, 20..60)) {
        let s = schema(3, 6, 4);
        let d = build(&s, &raw);
        // only w0 set: every part is 0 on every sample
        let mut p = random_params(&s, Arch::Fm, 3, &[], 1, 0.0 + f64::MIN_POSITIVE);
        p.values_mut().iter_mut().for_each(|v| *v = 0.0);
        p.set_w0(0.7);
        let Ok(v) = variance_decomposition(&p, &d, &s) else { return Ok(()) };
        prop_assert_eq!(v.linear_positive.variance, 0.0);
        prop_assert_eq!(v.high_order_negative.variance, 0.0);
    }
}
