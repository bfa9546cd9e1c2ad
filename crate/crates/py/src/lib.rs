//! Python bindings. Histograms cross the boundary as `{value: count}` dicts
//! in scaled units; reports cross as JSON text.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use trix_core::experiments::{self, ExperimentConfig};
use trix_core::io::load_histogram_csv;
use trix_core::stats::{self, BucketPolicy};
use trix_core::{ConeSpec, DelayModel, EnumerationGuard, Error, Histogram, RngAlgorithm, RngStream};

create_exception!(trix_grid, GuardError, PyException);
create_exception!(trix_grid, InconsistencyError, PyException);

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Guard { .. } => GuardError::new_err(e.to_string()),
        Error::Inconsistency(_) => InconsistencyError::new_err(e.to_string()),
        Error::Io(io) => io.into(),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn model(text: &str) -> PyResult<DelayModel> {
    text.parse().map_err(py_err)
}

fn histogram(counts: BTreeMap<i64, u64>, resolution: u32) -> PyResult<Histogram> {
    Histogram::from_pairs(counts, resolution).map_err(py_err)
}

fn counts(h: &Histogram) -> BTreeMap<i64, u64> {
    h.iter().filter(|(_, c)| *c > 0).collect()
}

/// One grid sample: the top-layer times `d(0..=span, height)` in scaled
/// units, plus every layer and wire delay when `record_grid` is set.
#[pyfunction]
#[pyo3(signature = (height, span=0, model="binary", seed=0, index=0, record_grid=false))]
fn simulate_sample(
    py: Python<'_>,
    height: u32,
    span: u32,
    model: &str,
    seed: u64,
    index: u64,
    record_grid: bool,
) -> PyResult<(Vec<u16>, Option<Vec<Vec<u16>>>, Option<Vec<u16>>)> {
    let m = self::model(model)?;
    let mut stream = RngStream::for_sample(RngAlgorithm::default(), seed, index);
    let s = py
        .detach(|| trix_core::simulate_sample(ConeSpec::new(height, span), &m, &mut stream, record_grid))
        .map_err(py_err)?;
    Ok((s.top, s.layers, s.delays))
}

/// Histograms of `d(0, H)` and of `d(δ, H) - d(0, H)` for each δ over
/// `samples` seeded samples. Returns `(delay, {δ: skew}, resolution)`.
#[pyfunction]
#[pyo3(signature = (height, deltas, samples, seed, model="binary", rng="xoshiro512ss"))]
#[allow(clippy::type_complexity)]
fn sample_cone(
    py: Python<'_>,
    height: u32,
    deltas: Vec<u32>,
    samples: u64,
    seed: u64,
    model: &str,
    rng: &str,
) -> PyResult<(BTreeMap<i64, u64>, BTreeMap<u32, BTreeMap<i64, u64>>, u32)> {
    let m = self::model(model)?;
    let alg: RngAlgorithm = rng.parse().map_err(py_err)?;
    let set = py
        .detach(|| experiments::sample_cone(height, &deltas, &m, alg, seed, samples))
        .map_err(py_err)?;
    let skews = set.skews.iter().map(|(d, h)| (*d, counts(h))).collect();
    Ok((counts(&set.delay), skews, m.resolution()))
}

/// Exact pmf of `d(0, H)` as `{value: (numerator, denominator)}`.
#[pyfunction]
#[pyo3(signature = (height, model="binary", force=false))]
fn exact_delay_pmf(py: Python<'_>, height: u32, model: &str, force: bool) -> PyResult<BTreeMap<i64, (u64, u64)>> {
    let m = self::model(model)?;
    let guard = EnumerationGuard { force, ..Default::default() };
    let pmf = py.detach(|| trix_core::exact_delay_pmf(height, &m, &guard)).map_err(py_err)?;
    Ok(pmf.fractions().into_iter().map(|(k, [n, d])| (k, (n, d))).collect())
}

/// Exact pmf of `d(δ, H) - d(0, H)` as `{value: (numerator, denominator)}`.
#[pyfunction]
#[pyo3(signature = (height, delta, model="binary", force=false))]
fn exact_skew_pmf(
    py: Python<'_>,
    height: u32,
    delta: u32,
    model: &str,
    force: bool,
) -> PyResult<BTreeMap<i64, (u64, u64)>> {
    let m = self::model(model)?;
    let guard = EnumerationGuard { force, ..Default::default() };
    let pmf = py
        .detach(|| trix_core::exact_skew_pmf(height, delta, &m, &guard))
        .map_err(py_err)?;
    Ok(pmf.fractions().into_iter().map(|(k, [n, d])| (k, (n, d))).collect())
}

#[pyfunction]
fn dkw_epsilon(n: u64, alpha: f64) -> PyResult<f64> {
    stats::dkw_epsilon(n, alpha).map_err(py_err)
}

#[pyfunction]
fn dkw_sample_size(epsilon: f64, alpha: f64) -> f64 {
    stats::dkw_sample_size(epsilon, alpha)
}

/// Simultaneous per-value bounds: a list of `(value, count, phat, pmin, pmax)`
/// followed by the pooled bucket.
#[pyfunction]
#[pyo3(signature = (counts, alpha=0.01, resolution=1, window=None))]
#[allow(clippy::type_complexity)]
fn confidence_band(
    counts: BTreeMap<i64, u64>,
    alpha: f64,
    resolution: u32,
    window: Option<(i64, i64)>,
) -> PyResult<(Vec<(i64, u64, f64, f64, f64)>, (u64, f64, f64))> {
    let h = histogram(counts, resolution)?;
    let band = stats::confidence_band(&h, alpha, &BucketPolicy { window }).map_err(py_err)?;
    let rows = band.rows.iter().map(|r| (r.value, r.count, r.phat, r.pmin, r.pmax)).collect();
    Ok((rows, (band.pooled.count, band.pooled.pmin, band.pooled.pmax)))
}

/// `(estimate, lo, hi)` of the standard deviation in physical units.
#[pyfunction]
#[pyo3(signature = (counts, alpha=0.01, resolution=1, lambda_min=2.0))]
fn stddev_interval(counts: BTreeMap<i64, u64>, alpha: f64, resolution: u32, lambda_min: f64) -> PyResult<(f64, f64, f64)> {
    let h = histogram(counts, resolution)?;
    let band = stats::confidence_band(&h, alpha, &BucketPolicy::default()).map_err(py_err)?;
    let s = stats::stddev_interval(&h, &band, lambda_min).map_err(py_err)?;
    Ok((s.estimate, s.lo, s.hi))
}

/// `(x, quantile)` pairs of the normal QQ transform.
#[pyfunction]
#[pyo3(signature = (counts, mu, sigma, resolution=1))]
fn qq(counts: BTreeMap<i64, u64>, mu: f64, sigma: f64, resolution: u32) -> PyResult<Vec<(f64, f64)>> {
    let h = histogram(counts, resolution)?;
    let pts = stats::ecdf_and_qq(&h, mu, sigma).map_err(py_err)?;
    Ok(pts.iter().map(|p| (p.x, p.quantile)).collect())
}

/// Reads a histogram CSV. Returns `(counts, resolution, metadata)`.
#[pyfunction]
#[pyo3(signature = (path, n=None))]
fn load_histogram(path: PathBuf, n: Option<u64>) -> PyResult<(BTreeMap<i64, u64>, u32, BTreeMap<String, String>)> {
    let loaded = load_histogram_csv(&path, n).map_err(py_err)?;
    let meta = loaded.meta.iter().map(|(k, v)| (k.to_owned(), v.to_owned())).collect();
    Ok((counts(&loaded.histogram), loaded.histogram.resolution(), meta))
}

/// Runs an experiment from its JSON config and returns the report as JSON.
/// With `out_dir`, the CSV/JSON artifacts are written there as well.
#[pyfunction]
#[pyo3(signature = (config_json, out_dir=None))]
fn run_experiment(py: Python<'_>, config_json: &str, out_dir: Option<PathBuf>) -> PyResult<String> {
    let cfg: ExperimentConfig =
        serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(format!("config: {e}")))?;
    let cfg = cfg.normalized().map_err(py_err)?;
    let report = py
        .detach(|| {
            let report = experiments::run_experiment(&cfg)?;
            if let Some(dir) = &out_dir {
                experiments::write_outputs(&report, dir)?;
            }
            Ok(report)
        })
        .map_err(py_err)?;
    serde_json::to_string(&report).map_err(|e| py_err(e.into()))
}

#[pymodule]
fn trix_grid(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", trix_core::VERSION)?;
    m.add("DRAW_ORDER", trix_core::DRAW_ORDER)?;
    m.add("GuardError", m.py().get_type::<GuardError>())?;
    m.add("InconsistencyError", m.py().get_type::<InconsistencyError>())?;
    m.add_function(wrap_pyfunction!(simulate_sample, m)?)?;
    m.add_function(wrap_pyfunction!(sample_cone, m)?)?;
    m.add_function(wrap_pyfunction!(exact_delay_pmf, m)?)?;
    m.add_function(wrap_pyfunction!(exact_skew_pmf, m)?)?;
    m.add_function(wrap_pyfunction!(dkw_epsilon, m)?)?;
    m.add_function(wrap_pyfunction!(dkw_sample_size, m)?)?;
    m.add_function(wrap_pyfunction!(confidence_band, m)?)?;
    m.add_function(wrap_pyfunction!(stddev_interval, m)?)?;
    m.add_function(wrap_pyfunction!(qq, m)?)?;
    m.add_function(wrap_pyfunction!(load_histogram, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
