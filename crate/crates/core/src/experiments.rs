//! Batch scenarios: distribution estimates, sweeps over the height or the
//! horizontal distance, cross-validation and oracle checks.
//!
//! Samples are split into fixed chunks of consecutive sample indices. Each
//! chunk fills private histograms from its own derived streams and chunks are
//! merged by exact count addition, so every result depends only on the
//! configuration and the seed, never on the number of workers.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ConeSpec, DelayModel, Simulator};
use crate::io::{self, Metadata, SweepRow};
use crate::oracle::{exact_delay_pmf, exact_mean, exact_skew_pmf, EnumerationGuard, ExactPmf};
use crate::rng::{mix64, parse_seed, RngAlgorithm, RngStream};
use crate::stats::{
    bootstrap_stddev_interval, confidence_band, dkw_epsilon, ecdf_and_qq, fit_exponential_tail,
    fit_power_law, ks_distance, ks_distance_two_sample, stddev_interval, BucketPolicy,
    ConfidenceBand, Coordinates, Histogram, QqPoint, StddevInterval, TailFit, TailSide,
};
use crate::{DRAW_ORDER, VERSION};

/// Samples per work unit.
const CHUNK: u64 = 4096;

/// Cross-validation verdicts are inconclusive once the two DKW half-widths
/// add up to at least this much.
pub const INCONCLUSIVE_EPSILON: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    DelayPmf,
    SkewPmf,
    DelaySweep,
    SkewSweep,
    DeltaSweep,
    CrossValidate,
    OracleCheck,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::DelayPmf,
        Scenario::SkewPmf,
        Scenario::DelaySweep,
        Scenario::SkewSweep,
        Scenario::DeltaSweep,
        Scenario::CrossValidate,
        Scenario::OracleCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::DelayPmf => "delay-pmf",
            Scenario::SkewPmf => "skew-pmf",
            Scenario::DelaySweep => "delay-sweep",
            Scenario::SkewSweep => "skew-sweep",
            Scenario::DeltaSweep => "delta-sweep",
            Scenario::CrossValidate => "cross-validate",
            Scenario::OracleCheck => "oracle-check",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Scenario::ALL.iter().map(|s| s.name()).collect();
                Error::config(format!("unknown scenario '{s}' (expected one of {})", names.join(", ")))
            })
    }
}

/// Which statistic of the top layer is histogrammed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Delay,
    Skew,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Delay => "delay",
            Target::Skew => "skew",
        })
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "delay" => Ok(Target::Delay),
            "skew" => Ok(Target::Skew),
            other => Err(Error::config(format!("unknown target '{other}' (expected delay or skew)"))),
        }
    }
}

fn default_samples() -> u64 {
    1_000_000
}
fn default_alpha() -> f64 {
    0.01
}
fn default_lambda_min() -> f64 {
    2.0
}
fn default_tail_range() -> (i64, i64) {
    (1, 4)
}
fn default_bootstrap() -> usize {
    1000
}
fn default_ceiling() -> f64 {
    2e12
}

fn seed_field<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<u64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(u64),
        Text(String),
    }
    match Option::<Raw>::deserialize(d)? {
        None => Ok(None),
        Some(Raw::Int(v)) => Ok(Some(v)),
        Some(Raw::Text(t)) => parse_seed(&t).map(Some).map_err(serde::de::Error::custom),
    }
}

/// A declarative experiment. The TOML/JSON keys mirror the CLI flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    /// Shorthand for a one-element `heights`.
    #[serde(default, skip_serializing)]
    pub height: Option<u32>,
    #[serde(default)]
    pub heights: Vec<u32>,
    /// Shorthand for a one-element `deltas`.
    #[serde(default, skip_serializing)]
    pub delta: Option<u32>,
    #[serde(default)]
    pub deltas: Vec<u32>,
    #[serde(default = "default_samples")]
    pub samples: u64,
    #[serde(default = "DelayModel::default_binary")]
    pub model: DelayModel,
    #[serde(default)]
    pub rng: RngAlgorithm,
    /// Master seed; drawn from OS entropy when absent.
    #[serde(default, deserialize_with = "seed_field")]
    pub seed: Option<u64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Slowest tail decay (per physical unit) assumed for unobserved mass.
    #[serde(default = "default_lambda_min")]
    pub lambda_min: f64,
    /// `|k|` range of the exponential tail fit, in scaled units.
    #[serde(default = "default_tail_range")]
    pub tail_range: (i64, i64),
    #[serde(default = "default_bootstrap")]
    pub bootstrap_resamples: usize,
    /// Worker threads; 0 uses every available core.
    #[serde(default)]
    pub workers: usize,
    /// Overrides the node-update and enumeration guards.
    #[serde(default)]
    pub force: bool,
    #[serde(default = "default_ceiling")]
    pub node_update_ceiling: f64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl DelayModel {
    fn default_binary() -> Self {
        DelayModel::BinaryFairCoin
    }
}

impl ExperimentConfig {
    pub fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            height: None,
            heights: Vec::new(),
            delta: None,
            deltas: Vec::new(),
            samples: default_samples(),
            model: DelayModel::BinaryFairCoin,
            rng: RngAlgorithm::default(),
            seed: None,
            alpha: default_alpha(),
            lambda_min: default_lambda_min(),
            tail_range: default_tail_range(),
            bootstrap_resamples: default_bootstrap(),
            workers: 0,
            force: false,
            node_update_ceiling: default_ceiling(),
            out_dir: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("config file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => {
                serde_json::from_str(&text).map_err(|e| Error::config(format!("config file: {e}")))
            }
            _ => Self::from_toml(&text),
        }
    }

    /// Folds the singular shorthands into the lists, fills scenario
    /// defaults, draws a seed if none was given and validates the result.
    pub fn normalized(mut self) -> Result<Self> {
        if let Some(h) = self.height.take() {
            if !self.heights.is_empty() && self.heights != [h] {
                return Err(Error::config("give either height or heights, not both"));
            }
            self.heights = vec![h];
        }
        if let Some(d) = self.delta.take() {
            if !self.deltas.is_empty() && self.deltas != [d] {
                return Err(Error::config("give either delta or deltas, not both"));
            }
            self.deltas = vec![d];
        }
        if self.deltas.is_empty() && matches!(self.scenario, Scenario::SkewPmf | Scenario::SkewSweep) {
            self.deltas = vec![1];
        }
        if self.seed.is_none() {
            self.seed = Some(RngStream::os_entropy().next_word());
        }
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::config("samples must be at least 1"));
        }
        if self.heights.is_empty() {
            return Err(Error::config(format!("scenario {} needs at least one height", self.scenario)));
        }
        if self.heights.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("heights must be strictly increasing"));
        }
        if self.deltas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("deltas must be strictly increasing"));
        }
        let max_delta = self.deltas.last().copied().unwrap_or(0);
        for &h in &self.heights {
            if max_delta as u64 > 2 * h as u64 {
                return Err(Error::config(format!(
                    "delta {max_delta} is outside [0, 2H] for H = {h}"
                )));
            }
            ConeSpec::new(h, max_delta).validate(&self.model)?;
        }
        match self.scenario {
            Scenario::DeltaSweep if self.deltas.is_empty() => {
                return Err(Error::config("delta-sweep needs a list of deltas"))
            }
            Scenario::SkewPmf | Scenario::SkewSweep if self.deltas.contains(&0) => {
                return Err(Error::config("skew scenarios need delta >= 1"))
            }
            Scenario::DelaySweep | Scenario::SkewSweep | Scenario::DeltaSweep
                if !self.model.is_stochastic() =>
            {
                return Err(Error::config("sweeps need a stochastic delay model"))
            }
            Scenario::CrossValidate if !self.model.is_stochastic() => {
                return Err(Error::config("cross-validation needs a stochastic delay model"))
            }
            _ => {}
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.lambda_min > 0.0) {
            return Err(Error::config("lambda_min must be positive"));
        }
        let (lo, hi) = self.tail_range;
        if lo < 1 || hi <= lo {
            return Err(Error::config("tail_range must satisfy 1 <= lo < hi"));
        }
        Ok(())
    }

    /// The effective master seed. Only valid after [`Self::normalized`].
    pub fn seed(&self) -> u64 {
        self.seed.expect("config not normalized")
    }

    /// Hash of every setting that can change a number in the output.
    pub fn hash(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(obj) = v.as_object_mut() {
            for key in ["workers", "force", "node_update_ceiling", "out_dir"] {
                obj.remove(key);
            }
        }
        io::config_hash(&v)
    }

    /// Median evaluations the scenario will perform.
    pub fn node_updates(&self) -> f64 {
        let n = self.samples as f64;
        let span = self.deltas.last().copied().unwrap_or(0);
        let per_h = |h: u32, s: u32| ConeSpec::new(h, s).node_count() as f64 * n;
        self.heights
            .iter()
            .map(|&h| match self.scenario {
                Scenario::DelayPmf | Scenario::DelaySweep => per_h(h, 0),
                Scenario::CrossValidate => 3.0 * per_h(h, span),
                _ => per_h(h, span),
            })
            .sum()
    }

    fn check_guard(&self) -> Result<()> {
        let need = self.node_updates();
        if need > self.node_update_ceiling && !self.force {
            return Err(Error::Guard {
                what: "this job",
                required: need as u128,
                limit: self.node_update_ceiling as u128,
                hint: " or raise node_update_ceiling",
            });
        }
        Ok(())
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))
    }
}

/// Histograms collected from one cone per sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleSet {
    pub cone: ConeSpec,
    /// `d(0, H)`.
    pub delay: Histogram,
    /// `(δ, histogram of d(δ, H) - d(0, H))` for each requested δ.
    pub skews: Vec<(u32, Histogram)>,
}

impl SampleSet {
    fn empty(cone: ConeSpec, deltas: &[u32], resolution: u32) -> Self {
        Self {
            cone,
            delay: Histogram::new(resolution),
            skews: deltas.iter().map(|&d| (d, Histogram::new(resolution))).collect(),
        }
    }

    fn merge(mut self, other: SampleSet) -> Self {
        self.delay.merge(&other.delay);
        for ((_, a), (_, b)) in self.skews.iter_mut().zip(&other.skews) {
            a.merge(b);
        }
        self
    }

    pub fn skew(&self, delta: u32) -> Option<&Histogram> {
        self.skews.iter().find(|(d, _)| *d == delta).map(|(_, h)| h)
    }
}

/// Evaluates `samples` cones of height `height` and span `max(deltas)`,
/// sample `i` drawing from the stream derived from `(seed, i)`.
///
/// Must be called inside the worker pool that should do the work.
pub fn sample_cone(
    height: u32,
    deltas: &[u32],
    model: &DelayModel,
    rng: RngAlgorithm,
    seed: u64,
    samples: u64,
) -> Result<SampleSet> {
    let span = deltas.iter().copied().max().unwrap_or(0);
    let cone = ConeSpec::new(height, span);
    cone.validate(model)?;
    let resolution = model.resolution();
    let chunks = samples.div_ceil(CHUNK);
    let set = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut sim = Simulator::new();
            let mut set = SampleSet::empty(cone, deltas, resolution);
            let start = c * CHUNK;
            let end = (start + CHUNK).min(samples);
            let mut stream = RngStream::for_sample(rng, seed, start);
            for i in start..end {
                stream.reseed(rng, seed, i);
                let top = sim.run_model(&cone, model, &mut stream);
                let d0 = top[0] as i64;
                set.delay.record(d0);
                for (d, h) in &mut set.skews {
                    h.record(top[*d as usize] as i64 - d0);
                }
            }
            set
        })
        .reduce(|| SampleSet::empty(cone, deltas, resolution), SampleSet::merge);
    Ok(set)
}

/// A named pass/fail assertion recorded in a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Summary of one estimated distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionResult {
    pub target: Target,
    pub height: u32,
    pub delta: u32,
    pub model: DelayModel,
    pub rng: RngAlgorithm,
    pub histogram: Histogram,
    pub band: ConfidenceBand,
    pub dkw_epsilon: f64,
    /// Physical units.
    pub mean: f64,
    pub stddev: Option<f64>,
    pub stddev_interval: Option<StddevInterval>,
    pub bootstrap_interval: Option<StddevInterval>,
    pub tail_fit: Option<TailFit>,
    pub qq: Vec<QqPoint>,
    pub checks: Vec<Check>,
}

impl DistributionResult {
    fn sweep_row(&self, axis: u32) -> SweepRow {
        let sd = self.stddev.unwrap_or(f64::NAN);
        let (lo, hi) = self
            .stddev_interval
            .map_or((f64::NAN, f64::NAN), |i| (i.lo, i.hi));
        SweepRow {
            axis,
            n: self.histogram.n(),
            mean: self.mean,
            stddev: sd,
            stddev_lo: lo,
            stddev_hi: hi,
        }
    }
}

fn symmetric_model(model: &DelayModel) -> bool {
    matches!(model, DelayModel::BinaryFairCoin | DelayModel::TernaryUniform)
}

/// Band, moments, intervals, fits and sanity checks for one histogram.
#[allow(clippy::too_many_arguments)]
pub fn analyze_distribution(
    hist: Histogram,
    target: Target,
    height: u32,
    delta: u32,
    model: &DelayModel,
    rng: RngAlgorithm,
    config: &ExperimentConfig,
) -> Result<DistributionResult> {
    let n = hist.n();
    let band = confidence_band(&hist, config.alpha, &BucketPolicy::default())?;
    let eps = dkw_epsilon(n, config.alpha)?;
    let mean = hist.mean()?;
    let stddev = (n >= 2).then(|| hist.stddev()).transpose()?;
    let (interval, bootstrap) = match stddev {
        Some(_) => {
            let interval = stddev_interval(&hist, &band, config.lambda_min)?;
            let salt = mix64(((height as u64) << 32) ^ delta as u64 ^ ((target as u64) << 63));
            let boot = if config.bootstrap_resamples >= 2 {
                Some(bootstrap_stddev_interval(
                    &hist,
                    config.bootstrap_resamples,
                    config.alpha,
                    config.seed() ^ salt,
                )?)
            } else {
                None
            };
            (Some(interval), boot)
        }
        None => (None, None),
    };

    let tail_fit = match target {
        Target::Skew => {
            let (lo, hi) = config.tail_range;
            (lo + 1..=hi)
                .rev()
                .find_map(|k_hi| fit_exponential_tail(&hist, lo, k_hi, TailSide::Pooled).ok())
        }
        Target::Delay => None,
    };
    let qq = match (target, stddev) {
        (Target::Delay, Some(sd)) if sd > 0.0 => ecdf_and_qq(&hist, height as f64 / 2.0, sd)?,
        _ => Vec::new(),
    };

    let mut checks = Vec::new();
    let scaled_bound = height as i64 * model.max_delay() as i64;
    let (lo_ok, hi_ok) = match target {
        Target::Delay => (0, scaled_bound),
        Target::Skew => (-scaled_bound, scaled_bound),
    };
    let (min, max) = (hist.min_value().unwrap_or(0), hist.max_value().unwrap_or(0));
    checks.push(Check {
        name: format!("{target} support h={height} d={delta}"),
        passed: min >= lo_ok && max <= hi_ok,
        detail: format!("observed [{min}, {max}], allowed [{lo_ok}, {hi_ok}] (scaled units)"),
    });
    if symmetric_model(model) {
        if let Some(sd) = stddev {
            let expected = match target {
                Target::Delay => height as f64 / 2.0,
                Target::Skew => 0.0,
            };
            let limit = 5.0 * sd / (n as f64).sqrt();
            let dev = (mean - expected).abs();
            checks.push(Check {
                name: format!("{target} mean h={height} d={delta}"),
                passed: dev <= limit,
                detail: format!("|mean - {expected}| = {dev:.6e}, limit 5σ/√n = {limit:.6e}"),
            });
        }
    }

    Ok(DistributionResult {
        target,
        height,
        delta,
        model: model.clone(),
        rng,
        histogram: hist,
        band,
        dkw_epsilon: eps,
        mean,
        stddev,
        stddev_interval: interval,
        bootstrap_interval: bootstrap,
        tail_fit,
        qq,
        checks,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub coordinates: Coordinates,
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
    /// Axis values that entered the fit.
    pub axis: Vec<u32>,
}

/// Standard deviations along a height or distance axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub target: Target,
    /// `"height"` or `"delta"`.
    pub axis_name: String,
    /// The fixed height of a distance sweep.
    pub height: Option<u32>,
    pub rows: Vec<SweepRow>,
    pub fits: Vec<FitSummary>,
}

impl SweepResult {
    pub fn fit(&self, coords: Coordinates) -> Option<&FitSummary> {
        self.fits.iter().find(|f| f.coordinates == coords)
    }

    pub fn row(&self, axis: u32) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.axis == axis)
    }
}

fn fit_rows(rows: &[SweepRow], coords: Coordinates, keep: impl Fn(u32) -> bool) -> Result<Option<FitSummary>> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| keep(r.axis) && r.stddev.is_finite())
        .map(|r| (r.axis as f64, r.stddev))
        .collect();
    if pts.len() < 3 {
        return Ok(None);
    }
    let line = fit_power_law(&pts, coords)?;
    Ok(Some(FitSummary {
        coordinates: coords,
        slope: line.slope,
        intercept: line.intercept,
        residual: line.residual,
        axis: rows.iter().filter(|r| keep(r.axis)).map(|r| r.axis).collect(),
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// Two runs of the same job compared through their DKW bands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub a: String,
    pub b: String,
    pub ks_distance: f64,
    pub epsilon_a: f64,
    pub epsilon_b: f64,
    pub verdict: Verdict,
    /// Physical units.
    pub stddev_a: Option<f64>,
    pub stddev_b: Option<f64>,
}

/// Whether two histograms are compatible with a common distribution: the
/// sup distance of their ECDFs must not exceed the sum of the half-widths.
pub fn compare_pair(a: &DistributionResult, b: &DistributionResult, label_a: &str, label_b: &str) -> PairComparison {
    let ks = ks_distance_two_sample(&a.histogram, &b.histogram);
    let (ea, eb) = (a.dkw_epsilon, b.dkw_epsilon);
    let verdict = if ea + eb >= INCONCLUSIVE_EPSILON {
        Verdict::Inconclusive
    } else if ks <= ea + eb {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    PairComparison {
        a: label_a.into(),
        b: label_b.into(),
        ks_distance: ks,
        epsilon_a: ea,
        epsilon_b: eb,
        verdict,
        stddev_a: a.stddev,
        stddev_b: b.stddev,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub target: Target,
    pub height: u32,
    pub delta: u32,
    /// xoshiro512** against OS entropy under the configured model.
    pub rng_pair: PairComparison,
    /// Binary against ternary delays under the configured generator.
    pub model_pair: PairComparison,
    /// Ternary standard deviation is at most the binary one.
    pub ternary_not_worse: Option<bool>,
}

/// Monte Carlo against exhaustive enumeration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub target: Target,
    pub height: u32,
    pub delta: u32,
    pub exact: ExactPmf,
    /// Exact mean as `numerator/denominator`, physical units.
    pub exact_mean: String,
    pub histogram: Histogram,
    pub dkw_epsilon: f64,
    pub ks_distance: f64,
    pub within_dkw: bool,
    /// Every exact probability lies inside the Chernoff bucket band.
    pub within_band: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: String,
    pub draw_order: String,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub distributions: Vec<DistributionResult>,
    pub sweeps: Vec<SweepResult>,
    pub cross_validations: Vec<CrossValidation>,
    pub oracle_checks: Vec<OracleCheck>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    pub elapsed_seconds: f64,
    pub samples_per_second: f64,
}

impl ExperimentReport {
    pub fn all_checks_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn distribution(&self, target: Target, height: u32, delta: u32) -> Option<&DistributionResult> {
        self.distributions
            .iter()
            .find(|d| d.target == target && d.height == height && d.delta == delta)
    }

    pub fn sweep(&self, target: Target, axis_name: &str) -> Option<&SweepResult> {
        self.sweeps
            .iter()
            .find(|s| s.target == target && s.axis_name == axis_name)
    }
}

struct Runner<'a> {
    config: &'a ExperimentConfig,
    samples_drawn: u64,
}

impl Runner<'_> {
    fn sample(&mut self, height: u32, deltas: &[u32], model: &DelayModel, rng: RngAlgorithm) -> Result<SampleSet> {
        self.samples_drawn += self.config.samples;
        sample_cone(height, deltas, model, rng, self.config.seed(), self.config.samples)
    }

    fn analyze(&self, hist: Histogram, target: Target, height: u32, delta: u32) -> Result<DistributionResult> {
        analyze_distribution(hist, target, height, delta, &self.config.model, self.config.rng, self.config)
    }
}

/// Runs a normalized configuration. Nothing is written to disk.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    if config.seed.is_none() {
        return Err(Error::config("run_experiment needs a normalized config with a seed"));
    }
    config.validate()?;
    config.check_guard()?;
    let pool = config.pool()?;
    let started = Instant::now();
    let mut report = ExperimentReport {
        version: VERSION.into(),
        draw_order: DRAW_ORDER.into(),
        config: config.clone(),
        config_hash: config.hash()?,
        distributions: Vec::new(),
        sweeps: Vec::new(),
        cross_validations: Vec::new(),
        oracle_checks: Vec::new(),
        checks: Vec::new(),
        notes: Vec::new(),
        elapsed_seconds: 0.0,
        samples_per_second: 0.0,
    };
    let mut runner = Runner {
        config,
        samples_drawn: 0,
    };
    pool.install(|| run_scenario(&mut runner, &mut report))?;

    for d in &report.distributions {
        report.checks.extend(d.checks.iter().cloned());
    }
    if !config.model.is_stochastic() {
        report
            .notes
            .push("deterministic delay model: every sample is identical".into());
    }
    report.elapsed_seconds = started.elapsed().as_secs_f64();
    report.samples_per_second = runner.samples_drawn as f64 / report.elapsed_seconds.max(1e-9);
    Ok(report)
}

fn run_scenario(runner: &mut Runner<'_>, report: &mut ExperimentReport) -> Result<()> {
    let config = runner.config;
    match config.scenario {
        Scenario::DelayPmf => {
            for &h in &config.heights {
                let set = runner.sample(h, &[], &config.model, config.rng)?;
                report.distributions.push(runner.analyze(set.delay, Target::Delay, h, 0)?);
            }
        }
        Scenario::SkewPmf => {
            for &h in &config.heights {
                let set = runner.sample(h, &config.deltas, &config.model, config.rng)?;
                for (d, hist) in set.skews {
                    report.distributions.push(runner.analyze(hist, Target::Skew, h, d)?);
                }
            }
        }
        Scenario::DelaySweep | Scenario::SkewSweep => {
            let skew = config.scenario == Scenario::SkewSweep;
            let delta = if skew { config.deltas[0] } else { 0 };
            let deltas: &[u32] = if skew { &config.deltas[..1] } else { &[] };
            let mut delay_rows = Vec::new();
            let mut skew_rows = Vec::new();
            for &h in &config.heights {
                let set = runner.sample(h, deltas, &config.model, config.rng)?;
                let dr = runner.analyze(set.delay, Target::Delay, h, 0)?;
                delay_rows.push(dr.sweep_row(h));
                report.distributions.push(dr);
                if let Some((_, hist)) = set.skews.into_iter().next() {
                    let sr = runner.analyze(hist, Target::Skew, h, delta)?;
                    skew_rows.push(sr.sweep_row(h));
                    report.distributions.push(sr);
                }
            }
            let fits = fit_rows(&delay_rows, Coordinates::LogLog, |_| true)?;
            report.sweeps.push(SweepResult {
                target: Target::Delay,
                axis_name: "height".into(),
                height: None,
                rows: delay_rows,
                fits: fits.into_iter().collect(),
            });
            if skew {
                let mut fits = Vec::new();
                for coords in [Coordinates::LogLin, Coordinates::LogLogLin] {
                    fits.extend(fit_rows(&skew_rows, coords, |h| h > 1)?);
                }
                report.sweeps.push(SweepResult {
                    target: Target::Skew,
                    axis_name: "height".into(),
                    height: None,
                    rows: skew_rows,
                    fits,
                });
            }
        }
        Scenario::DeltaSweep => {
            for &h in &config.heights {
                let set = runner.sample(h, &config.deltas, &config.model, config.rng)?;
                let mut rows = Vec::new();
                for (d, hist) in set.skews {
                    if d == 0 {
                        continue;
                    }
                    let r = runner.analyze(hist, Target::Skew, h, d)?;
                    rows.push(r.sweep_row(d));
                    report.distributions.push(r);
                }
                let early = fit_rows(&rows, Coordinates::LogLog, |d| 20 * d as u64 <= h as u64)?;
                if early.is_none() {
                    report.notes.push(format!(
                        "H = {h}: fewer than 3 distances with delta <= H/20, no early-region slope"
                    ));
                }
                report.sweeps.push(SweepResult {
                    target: Target::Skew,
                    axis_name: "delta".into(),
                    height: Some(h),
                    rows,
                    fits: early.into_iter().collect(),
                });
            }
        }
        Scenario::CrossValidate => {
            let delta = config.deltas.first().copied().unwrap_or(0);
            let target = if delta > 0 { Target::Skew } else { Target::Delay };
            let deltas: Vec<u32> = if delta > 0 { vec![delta] } else { Vec::new() };
            for &h in &config.heights {
                let mut run = |model: &DelayModel, rng: RngAlgorithm| -> Result<DistributionResult> {
                    let set = runner.sample(h, &deltas, model, rng)?;
                    let hist = match target {
                        Target::Delay => set.delay,
                        Target::Skew => set.skews.into_iter().next().map(|(_, h)| h).unwrap(),
                    };
                    analyze_distribution(hist, target, h, delta, model, rng, config)
                };
                let base = run(&config.model, config.rng)?;
                let other_rng = match config.rng {
                    RngAlgorithm::Xoshiro512StarStar => RngAlgorithm::OsEntropy,
                    RngAlgorithm::OsEntropy => RngAlgorithm::Xoshiro512StarStar,
                };
                let alt_rng = run(&config.model, other_rng)?;
                let rng_pair = compare_pair(&base, &alt_rng, &config.rng.to_string(), &other_rng.to_string());
                let (binary, ternary) = match config.model {
                    DelayModel::TernaryUniform => (run(&DelayModel::BinaryFairCoin, config.rng)?, base.clone()),
                    _ => (base.clone(), run(&DelayModel::TernaryUniform, config.rng)?),
                };
                let model_pair = compare_pair(&binary, &ternary, "binary", "ternary");
                let ternary_not_worse = match (binary.stddev, ternary.stddev) {
                    (Some(b), Some(t)) => Some(t <= b),
                    _ => None,
                };
                report.distributions.extend([base, alt_rng]);
                if config.model == DelayModel::TernaryUniform {
                    report.distributions.push(binary);
                } else {
                    report.distributions.push(ternary);
                }
                report.cross_validations.push(CrossValidation {
                    target,
                    height: h,
                    delta,
                    rng_pair,
                    model_pair,
                    ternary_not_worse,
                });
            }
            report
                .notes
                .push("os-entropy runs are not reproducible from the seed".into());
        }
        Scenario::OracleCheck => {
            let guard = EnumerationGuard {
                force: config.force,
                ..Default::default()
            };
            for &h in &config.heights {
                let skew_deltas: Vec<u32> = config.deltas.iter().copied().filter(|&d| d > 0).collect();
                let set = runner.sample(h, &skew_deltas, &config.model, config.rng)?;
                let exact = exact_delay_pmf(h, &config.model, &guard)?;
                report
                    .oracle_checks
                    .push(oracle_check(Target::Delay, h, 0, exact, set.delay, config.alpha)?);
                for (d, hist) in set.skews {
                    let exact = exact_skew_pmf(h, d, &config.model, &guard)?;
                    report
                        .oracle_checks
                        .push(oracle_check(Target::Skew, h, d, exact, hist, config.alpha)?);
                }
            }
            for c in &report.oracle_checks {
                report.checks.push(Check {
                    name: format!("oracle {} h={} d={}", c.target, c.height, c.delta),
                    passed: c.within_dkw,
                    detail: format!(
                        "KS distance {:.6e} against DKW ε {:.6e}",
                        c.ks_distance, c.dkw_epsilon
                    ),
                });
            }
        }
    }
    Ok(())
}

/// Compares a Monte Carlo histogram with an exact pmf.
pub fn oracle_check(
    target: Target,
    height: u32,
    delta: u32,
    exact: ExactPmf,
    hist: Histogram,
    alpha: f64,
) -> Result<OracleCheck> {
    let eps = dkw_epsilon(hist.n(), alpha)?;
    let lo = exact.counts.keys().next().copied().unwrap_or(0).min(hist.min_value().unwrap_or(0));
    let hi = exact.counts.keys().last().copied().unwrap_or(0).max(hist.max_value().unwrap_or(0));
    let ks = ks_distance(&hist, |v| exact.cdf_f64(v), lo, hi);
    let band = confidence_band(&hist, alpha, &BucketPolicy::default())?;
    let within_band = (lo..=hi).all(|v| band.contains(v, exact.probability_f64(v)));
    let m = exact_mean(&exact);
    Ok(OracleCheck {
        target,
        height,
        delta,
        exact_mean: format!("{}/{}", m.numer(), m.denom()),
        exact,
        histogram: hist,
        dkw_epsilon: eps,
        ks_distance: ks,
        within_dkw: ks <= eps,
        within_band,
    })
}

/// Metadata shared by every CSV of a run.
pub fn run_metadata(config: &ExperimentConfig, config_hash: &str) -> Metadata {
    Metadata::tagged()
        .with("seed", config.seed.map_or("none".into(), |s| s.to_string()))
        .with("config-hash", config_hash)
        .with("scenario", config.scenario)
}

fn distribution_meta(base: &Metadata, d: &DistributionResult) -> Metadata {
    base.clone()
        .with("target", d.target)
        .with("height", d.height)
        .with("delta", d.delta)
        .with("model", &d.model)
        .with("rng", d.rng)
}

/// Writes `report.json` and one CSV per histogram, QQ table and sweep into
/// `dir`. Returns the written paths in order.
pub fn write_outputs(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let base = run_metadata(&report.config, &report.config_hash);
    let mut written = Vec::new();
    let mut put = |name: String, body: Vec<u8>| -> Result<()> {
        let path = dir.join(name);
        io::write_bytes(&path, &body)?;
        written.push(path);
        Ok(())
    };
    for d in &report.distributions {
        let meta = distribution_meta(&base, d);
        let stem = match d.target {
            Target::Delay => format!("delay_h{}", d.height),
            Target::Skew => format!("skew_h{}_d{}", d.height, d.delta),
        };
        let stem = match (report.config.scenario, d.model == report.config.model, d.rng == report.config.rng) {
            (Scenario::CrossValidate, true, true) => format!("{stem}_base"),
            (Scenario::CrossValidate, true, false) => format!("{stem}_{}", d.rng),
            (Scenario::CrossValidate, false, _) => format!("{stem}_{}", d.model),
            _ => stem,
        };
        put(format!("{stem}.csv"), io::histogram_csv(&d.histogram, Some(&d.band), &meta)?)?;
        if !d.qq.is_empty() {
            let qmeta = meta
                .clone()
                .with("mu", d.height as f64 / 2.0)
                .with("sigma", d.stddev.unwrap_or(f64::NAN));
            put(format!("{stem}_qq.csv"), io::qq_csv(&d.qq, &qmeta)?)?;
        }
    }
    for s in &report.sweeps {
        let mut meta = base.clone().with("target", s.target).with("axis", &s.axis_name);
        if let Some(h) = s.height {
            meta.set("height", h);
        }
        for f in &s.fits {
            meta.set(format!("slope-{}", f.coordinates), f.slope);
            meta.set(format!("residual-{}", f.coordinates), f.residual);
        }
        let name = match (s.target, s.height) {
            (_, Some(h)) => format!("delta_sweep_h{h}.csv"),
            (t, None) => format!("{t}_sweep.csv"),
        };
        put(name, io::sweep_csv(&s.rows, &meta)?)?;
    }
    for c in &report.oracle_checks {
        let stem = match c.target {
            Target::Delay => format!("exact_delay_h{}", c.height),
            Target::Skew => format!("exact_skew_h{}_d{}", c.height, c.delta),
        };
        let meta = base.clone().with("height", c.height).with("delta", c.delta);
        put(format!("{stem}.csv"), io::exact_pmf_csv(&c.exact, &meta)?)?;
        put(format!("{stem}.json"), io::exact_pmf_json(&c.exact)?.into_bytes())?;
        let mc = match c.target {
            Target::Delay => format!("delay_h{}.csv", c.height),
            Target::Skew => format!("skew_h{}_d{}.csv", c.height, c.delta),
        };
        put(mc, io::histogram_csv(&c.histogram, None, &meta)?)?;
    }
    let path = dir.join("report.json");
    io::write_json(&path, report)?;
    written.push(path);
    Ok(written)
}
