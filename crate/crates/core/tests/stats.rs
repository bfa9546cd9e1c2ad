use approx::assert_relative_eq;
use proptest::prelude::*;
use trix_core::experiments::sample_cone;
use trix_core::grid::DelayModel;
use trix_core::oracle::{exact_delay_pmf, EnumerationGuard};
use trix_core::stats::{
    chernoff_bucket_bounds, confidence_band, dkw_band, dkw_epsilon, ecdf_and_qq, empirical_stddev,
    fit_exponential_tail, fit_power_law, normal_quantile, stddev_interval, BucketPolicy, Coordinates, Histogram,
    TailSide,
};
use trix_core::RngAlgorithm;

#[test]
fn dkw_examples() {
    let e = dkw_epsilon(25_000_000, 0.01).unwrap();
    assert!((e - 0.00032552).abs() < 5e-9, "{e}");
    assert!((dkw_epsilon(10_000, 0.05).unwrap() - 0.013581).abs() < 5e-7);
    assert_eq!(dkw_epsilon(123, 2.0).unwrap(), 0.0);
    assert!(dkw_epsilon(0, 0.01).is_err());
    assert!(dkw_epsilon(10, 0.0).is_err());
}

#[test]
fn chernoff_examples() {
    let (lo, hi) = chernoff_bucket_bounds(0, 1_000_000, 0.01).unwrap();
    assert_eq!(lo, 0.0);
    assert_relative_eq!(hi, 2.0 * 100f64.ln() / 1e6, max_relative = 1e-8);
    assert_eq!(chernoff_bucket_bounds(77, 77, 0.01).unwrap().1, 1.0);
    let (lo, hi) = chernoff_bucket_bounds(5_000_000, 10_000_000, 1e-3).unwrap();
    assert!(lo < 0.5 && 0.5 < hi);
    assert!(hi - 0.5 < 1e-3 && 0.5 - lo < 1e-3);
}

#[test]
fn single_value_band() {
    let h = Histogram::from_counts(4, vec![1_000_000], 1).unwrap();
    let band = confidence_band(&h, 0.01, &BucketPolicy::default()).unwrap();
    assert_eq!(band.buckets, 2);
    assert!(band.contains(4, 1.0));
    assert!(band.pooled.pmax < 2e-5);
    assert_relative_eq!(band.pooled.pmax, 2.0 * (2.0 / 0.01f64).ln() / 1e6, max_relative = 1e-8);
}

#[test]
fn stddev_interval_of_small_delay_run_is_tight() {
    let set = sample_cone(20, &[], &DelayModel::BinaryFairCoin, RngAlgorithm::Xoshiro512StarStar, 7, 1_000_000).unwrap();
    let band = confidence_band(&set.delay, 0.01, &BucketPolicy::default()).unwrap();
    let iv = stddev_interval(&set.delay, &band, 2.0).unwrap();
    assert!(iv.lo <= iv.estimate && iv.estimate <= iv.hi);
    // ten times fewer samples than the published run, so roughly √10 wider
    assert!(iv.relative_half_width() < 0.0135 * 10f64.sqrt(), "{iv:?}");
}

#[test]
fn qq_of_a_stratified_normal_sample_is_near_identity() {
    let (mu, sigma, n) = (12.0, 3.0, 200_000u64);
    let res = 4u32;
    let values = (0..n).map(|i| {
        let z = normal_quantile((i as f64 + 0.5) / n as f64);
        ((mu + sigma * z) * res as f64).round() as i64
    });
    let h = Histogram::from_values(values, res);
    let pts = ecdf_and_qq(&h, mu, sigma).unwrap();
    let tol = 4.0 * sigma / (n as f64).sqrt();
    let (lo, hi) = (mu + sigma * normal_quantile(0.025), mu + sigma * normal_quantile(0.975));
    let central: Vec<_> = pts.iter().filter(|p| p.x >= lo && p.x <= hi).collect();
    assert!(central.len() > 40);
    for p in central {
        assert!((p.quantile - p.x).abs() <= tol, "{p:?}");
    }
}

#[test]
fn exponential_tail_recovers_generated_slope() {
    let counts: Vec<u64> = (-5i32..=5).map(|k| (1e14 * (-3.0 * k.abs() as f64).exp()).round() as u64).collect();
    let h = Histogram::from_counts(-5, counts, 1).unwrap();
    let fit = fit_exponential_tail(&h, 1, 5, TailSide::Pooled).unwrap();
    assert!((fit.lambda - 3.0).abs() < 1e-6);
    let gap = Histogram::from_counts(-2, vec![5, 50, 500, 0, 5], 1).unwrap();
    assert!(fit_exponential_tail(&gap, 1, 2, TailSide::Right).is_err());
}

#[test]
fn band_covers_exact_pmf_at_height_one() {
    let exact = exact_delay_pmf(1, &DelayModel::BinaryFairCoin, &EnumerationGuard::default()).unwrap();
    let mut covered = 0;
    for seed in 0..30 {
        let set = sample_cone(1, &[], &DelayModel::BinaryFairCoin, RngAlgorithm::Xoshiro512StarStar, seed, 20_000)
            .unwrap();
        let band = confidence_band(&set.delay, 0.01, &BucketPolicy { window: Some((0, 1)) }).unwrap();
        if (0..=1).all(|v| band.contains(v, exact.probability_f64(v))) {
            covered += 1;
        }
    }
    assert!(covered >= 28, "{covered}/30");
}

proptest! {
    #[test]
    fn histogram_stddev_matches_expanded_list(values in prop::collection::vec(-50i64..50, 2..400), res in 1u32..4) {
        let h = Histogram::from_values(values.iter().copied(), res);
        let raw: Vec<f64> = values.iter().map(|&v| v as f64 / res as f64).collect();
        let a = h.stddev().unwrap();
        let b = empirical_stddev(&raw).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * b.max(1e-300) || (a == 0.0 && b < 1e-12));
    }

    #[test]
    fn dkw_is_monotone(n in 1u64..1_000_000_000, alpha in 0.001f64..0.5) {
        let e = dkw_epsilon(n, alpha).unwrap();
        prop_assert!(dkw_epsilon(n + 1, alpha).unwrap() < e);
        prop_assert!(dkw_epsilon(n, alpha * 0.9).unwrap() > e);
    }

    #[test]
    fn bands_contain_the_estimate(counts in prop::collection::vec(0u64..10_000, 1..12), alpha in 0.001f64..0.2) {
        prop_assume!(counts.iter().any(|&c| c > 0));
        let h = Histogram::from_counts(-3, counts, 1).unwrap();
        for band in [
            confidence_band(&h, alpha, &BucketPolicy::default()).unwrap(),
            dkw_band(&h, alpha, &BucketPolicy::default()).unwrap(),
        ] {
            for row in &band.rows {
                prop_assert!(row.pmin <= row.phat && row.phat <= row.pmax, "{row:?}");
            }
            prop_assert!(band.pooled.pmin <= band.pooled.phat && band.pooled.phat <= band.pooled.pmax);
        }
    }

    #[test]
    fn log_log_slope_is_scale_invariant(
        pts in prop::collection::vec((1.0f64..1e4, 0.01f64..100.0), 3..10),
        scale in 0.001f64..1000.0,
    ) {
        let mut xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        prop_assume!(xs.len() >= 3 && xs.windows(2).all(|w| w[1] / w[0] > 1.001));
        let scaled: Vec<_> = pts.iter().map(|&(a, v)| (a, v * scale)).collect();
        let a = fit_power_law(&pts, Coordinates::LogLog).unwrap();
        let b = fit_power_law(&scaled, Coordinates::LogLog).unwrap();
        prop_assert!((a.slope - b.slope).abs() <= 1e-8 * (1.0 + a.slope.abs()));
        prop_assert!((b.intercept - a.intercept - scale.ln()).abs() <= 1e-8 * (1.0 + a.intercept.abs() + scale.ln().abs()));
    }
}
