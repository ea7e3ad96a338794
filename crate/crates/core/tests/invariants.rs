use proptest::prelude::*;

use storyflat::genclient::decode_budget;
use storyflat::numeric::SdDivisor;
use storyflat::stats::{percentile_interval, residualize};
use storyflat::style::{
    across_story_variance, fixed_k_variance, manifold_precision, mmd2_unbiased, FixedKConfig, KernelConfig,
    ManifoldConfig,
};
use storyflat::theme::{jump_cv, jump_series_of, JumpMetric};

fn points(n: std::ops::Range<usize>, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-3.0f64..3.0, dim), n).prop_filter("no zero vectors", |v| {
        v.iter().all(|p| p.iter().any(|x| x.abs() > 1e-3))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mmd_is_symmetric(h in points(2..12, 3), m in points(2..12, 3)) {
        let cfg = KernelConfig::default();
        let a = mmd2_unbiased(&h, &m, &cfg).unwrap();
        let b = mmd2_unbiased(&m, &h, &cfg).unwrap();
        prop_assert_eq!(a.value, b.value);
        prop_assert_eq!(a.bandwidth, b.bandwidth);
    }

    #[test]
    fn mmd_ignores_vector_length(h in points(2..10, 3), m in points(2..10, 3), c in 0.1f64..10.0) {
        let cfg = KernelConfig::default();
        let scaled: Vec<Vec<f64>> = m.iter().map(|v| v.iter().map(|x| c * x).collect()).collect();
        let a = mmd2_unbiased(&h, &m, &cfg).unwrap().value;
        let b = mmd2_unbiased(&h, &scaled, &cfg).unwrap().value;
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn jump_cv_is_scale_invariant(t in points(3..20, 4), c in 0.01f64..100.0) {
        let scaled: Vec<Vec<f64>> = t.iter().map(|v| v.iter().map(|x| c * x).collect()).collect();
        let cv = |x: &[Vec<f64>]| jump_series_of(x, JumpMetric::L2).ok().and_then(|s| jump_cv(&s, SdDivisor::Sample).ok());
        match (cv(&t), cv(&scaled)) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
            (a, b) => prop_assert_eq!(a.is_some(), b.is_some()),
        }
    }

    #[test]
    fn residuals_are_orthogonal_to_length(
        pairs in prop::collection::vec((0.0f64..1.0, 1.0f64..100.0), 3..60)
    ) {
        let (q, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if let Ok(r) = residualize(&q, &t) {
            let mt = t.iter().sum::<f64>() / t.len() as f64;
            let dot: f64 = r.residualized.iter().zip(&t).map(|(a, b)| a * (b - mt)).sum();
            let scale: f64 = t.iter().map(|b| (b - mt).abs()).sum::<f64>().max(1.0);
            prop_assert!(dot.abs() / scale < 1e-9);
            let mq = q.iter().sum::<f64>() / q.len() as f64;
            let mr = r.residualized.iter().sum::<f64>() / q.len() as f64;
            prop_assert!((mq - mr).abs() < 1e-12);
        }
    }

    #[test]
    fn decode_budget_is_clamped_and_monotone(a in 0usize..10_000, b in 0usize..10_000) {
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(decode_budget(lo) <= decode_budget(hi));
        prop_assert!((64..=2048).contains(&decode_budget(a)));
    }

    #[test]
    fn percentile_interval_is_ordered(x in prop::collection::vec(-5.0f64..5.0, 2..200), level in 0.5f64..0.99) {
        let (lo, hi) = percentile_interval(&x, level).unwrap();
        let min = x.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(min <= lo && lo <= hi && hi <= max);
    }

    #[test]
    fn fixed_k_with_single_sentences_is_plain_variance(c in points(2..15, 3)) {
        let groups: Vec<Vec<Vec<f64>>> = c.iter().map(|v| vec![v.clone()]).collect();
        let est = fixed_k_variance(&groups, &FixedKConfig { k: 8, resamples: 3, seed: 1 }).unwrap();
        let plain = across_story_variance(&c).unwrap();
        prop_assert!((est.variance - plain).abs() <= 1e-12 * plain.max(1.0));
    }

    #[test]
    fn manifold_precision_is_rotation_invariant(h in points(8..30, 2), m in points(1..10, 2), angle in 0.0f64..std::f64::consts::TAU) {
        let cfg = ManifoldConfig { standardize: false, neighbor_k: 3, ..ManifoldConfig::default() };
        let (s, c) = angle.sin_cos();
        let rot = |v: &Vec<f64>| vec![c * v[0] - s * v[1], s * v[0] + c * v[1]];
        let a = manifold_precision(&h, &m, &cfg).unwrap();
        let hr: Vec<Vec<f64>> = h.iter().map(rot).collect();
        let mr: Vec<Vec<f64>> = m.iter().map(rot).collect();
        let b = manifold_precision(&hr, &mr, &cfg).unwrap();
        prop_assert!((0.0..=1.0).contains(&a.precision));
        // Points sitting exactly on the radius may flip under rounding.
        prop_assert!((a.precision - b.precision).abs() <= 1.0 / m.len() as f64 + 1e-12);
        prop_assert_eq!(manifold_precision(&h, &h, &cfg).unwrap().precision, 1.0);
    }
}
