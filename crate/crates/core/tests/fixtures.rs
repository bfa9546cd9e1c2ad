use std::path::PathBuf;

use trix_core::io::{load_histogram_csv, read_table};
use trix_core::stats::{dkw_epsilon, ecdf_and_qq, fit_exponential_tail, fit_power_law, Coordinates, TailSide};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

#[test]
fn delay_table_loads_with_declared_n() {
    let loaded = load_histogram_csv(&data("delay_pmf_h2000.csv"), None).unwrap();
    let h = &loaded.histogram;
    assert_eq!(loaded.declared_n, Some(25_000_000));
    assert_eq!(h.n(), 25_000_000);
    assert_eq!((h.min_value(), h.max_value()), (Some(985), Some(1015)));
    assert!((h.phat(1000) - 0.14553656).abs() < 1e-12);
    assert!((h.mean().unwrap() - 1000.0).abs() < 0.01);
    assert!((h.stddev().unwrap() - 2.741).abs() < 0.01);
}

#[test]
fn skew_table_rounds_to_within_a_count_per_row() {
    let loaded = load_histogram_csv(&data("skew_pmf_h2000.csv"), None).unwrap();
    let h = &loaded.histogram;
    assert_eq!(loaded.declared_n, Some(20_000_000));
    assert!(h.n().abs_diff(20_000_000) <= 14);
    assert!((h.phat(0) - 0.5124375).abs() < 2e-7);
    let eps = dkw_epsilon(10_000_000, 0.01).unwrap();
    assert_eq!(format!("{eps:.7}"), "0.0005147");
    assert_eq!(loaded.meta.get("reported_dkw_epsilon"), Some("0.0005147"));
    // the declared n gives a smaller epsilon than the printed one
    assert!(dkw_epsilon(20_000_000, 0.01).unwrap() < 0.000365);
}

#[test]
fn qq_table_is_reproduced() {
    let h = load_histogram_csv(&data("delay_pmf_h2000.csv"), None).unwrap().histogram;
    let pts = ecdf_and_qq(&h, 1000.0, 2.741).unwrap();
    let table = read_table(&data("delay_qq_h2000.csv")).unwrap();
    let xs: Vec<f64> = table.parse_named("x").unwrap();
    let qs: Vec<f64> = table.parse_named("quantile").unwrap();
    let mut checked = 0;
    for (x, q) in xs.into_iter().zip(qs) {
        if !(990.5..=1009.5).contains(&x) {
            continue;
        }
        let p = pts.iter().find(|p| p.x == x).unwrap();
        assert!((p.quantile - q).abs() <= 0.01, "x = {x}: {} vs {q}", p.quantile);
        checked += 1;
    }
    assert_eq!(checked, 20);
    let at = |x: f64| pts.iter().find(|p| p.x == x).unwrap().quantile;
    assert!((at(1000.5) - 1000.503).abs() <= 0.01);
    assert!((at(995.5) - 995.475).abs() <= 0.01);
}

#[test]
fn skew_tail_decay() {
    let h = load_histogram_csv(&data("skew_pmf_h2000.csv"), None).unwrap().histogram;
    let fit = fit_exponential_tail(&h, 1, 4, TailSide::Pooled).unwrap();
    assert!((2.6..=3.2).contains(&fit.lambda), "{fit:?}");
}

#[test]
fn stddev_columns_fit_published_trends() {
    let t = read_table(&data("stddev_vs_height.csv")).unwrap();
    let hs: Vec<f64> = t.parse_named("height").unwrap();
    let delay: Vec<f64> = t.parse_named("delay_stddev").unwrap();
    let skew: Vec<f64> = t.parse_named("skew_stddev").unwrap();
    let pts = |v: &[f64]| hs.iter().copied().zip(v.iter().copied()).collect::<Vec<_>>();
    let beta = fit_power_law(&pts(&delay), Coordinates::LogLog).unwrap().slope;
    assert!((0.22..=0.28).contains(&beta), "{beta}");
    let growth = fit_power_law(&pts(&skew), Coordinates::LogLin).unwrap().slope;
    assert!(growth > 0.0 && growth < 0.01, "{growth}");
    assert!(skew.last().unwrap() - skew[0] < 0.03);
    assert_eq!((hs[0], *hs.last().unwrap()), (20.0, 5000.0));
}

#[test]
fn delta_column_has_early_sublinear_growth() {
    let t = read_table(&data("skew_stddev_vs_delta_h500.csv")).unwrap();
    let d: Vec<f64> = t.parse_named("delta").unwrap();
    let s: Vec<f64> = t.parse_named("skew_stddev").unwrap();
    let pts: Vec<_> = d.iter().copied().zip(s.iter().copied()).filter(|p| p.0 <= 25.0).collect();
    let gamma = fit_power_law(&pts, Coordinates::LogLog).unwrap().slope;
    assert!((0.28..=0.40).contains(&gamma), "{gamma}");
    assert!((s[0] - 0.763).abs() < 0.001);
}
