//! Confidence bounds on an estimated probability mass function.
//!
//! Two techniques are combined. The DKW inequality bounds the whole CDF
//! uniformly. For individual probabilities, each bucket (a single value, or
//! the pool of all unobserved values) gets an interval by inverting the
//! multiplicative Chernoff bounds at the observed count, with the failure
//! probability split evenly over the buckets (union bound).
//!
//! Chernoff forms, for `X ~ Bin(n, p)` and `μ = n·p`:
//!
//! * lower tail: `P(X <= (1 - δ)μ) <= exp(-μ δ² / 2)`
//! * upper tail: `P(X >= (1 + δ)μ) <= (e^δ / (1 + δ)^(1 + δ))^μ`

use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::Histogram;
use crate::error::{Error, Result};
use crate::rng::derive_stream;

/// Half-width `sqrt(ln(2/α) / (2n))` of the DKW confidence band.
pub fn dkw_epsilon(n: u64, alpha: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::argument("DKW bound needs n >= 1"));
    }
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::argument(format!("DKW bound needs 0 < α <= 2, got {alpha}")));
    }
    Ok(((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt())
}

/// The sample size at which the DKW half-width equals `epsilon`.
pub fn dkw_sample_size(epsilon: f64, alpha: f64) -> f64 {
    (2.0 / alpha).ln() / (2.0 * epsilon * epsilon)
}

const BISECTION_RTOL: f64 = 1e-9;

/// `ln` of the lower-tail bound on `P(X <= k)` when `X ~ Bin(n, p)`, `k <= np`.
fn ln_lower_tail(k: f64, n: f64, p: f64) -> f64 {
    let mu = n * p;
    -(mu - k) * (mu - k) / (2.0 * mu)
}

/// `ln` of the upper-tail bound on `P(X >= k)` when `X ~ Bin(n, p)`, `k >= np`.
fn ln_upper_tail(k: f64, n: f64, p: f64) -> f64 {
    let mu = n * p;
    if mu <= 0.0 {
        return f64::NEG_INFINITY;
    }
    // μ(δ - (1 + δ) ln(1 + δ)) with 1 + δ = k / μ
    (k - mu) - k * (k / mu).ln()
}

/// Per-bucket probability interval `[p_min, p_max]` for `k` hits out of `n`.
///
/// `p_max` is the smallest `p >= k/n` for which observing at most `k` hits
/// has Chernoff probability `<= α'`; `p_min` is the largest `p <= k/n` for
/// which observing at least `k` hits does. Both are found by bisection to
/// relative tolerance `1e-9`, rounded outward.
pub fn chernoff_bucket_bounds(k: u64, n: u64, alpha_bucket: f64) -> Result<(f64, f64)> {
    if n == 0 || k > n {
        return Err(Error::argument(format!(
            "Chernoff bounds need 0 <= k <= n and n >= 1 (k = {k}, n = {n})"
        )));
    }
    if !(alpha_bucket > 0.0 && alpha_bucket < 1.0) {
        return Err(Error::argument(format!(
            "per-bucket failure probability must lie in (0, 1), got {alpha_bucket}"
        )));
    }
    let (kf, nf) = (k as f64, n as f64);
    let phat = kf / nf;
    let target = alpha_bucket.ln();

    let p_max = if k == n || ln_lower_tail(kf, nf, 1.0) > target {
        1.0
    } else {
        let (mut lo, mut hi) = (phat, 1.0);
        for _ in 0..400 {
            if hi - lo <= BISECTION_RTOL * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if ln_lower_tail(kf, nf, mid) <= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };

    let p_min = if k == 0 {
        0.0
    } else {
        let (mut lo, mut hi) = (0.0, phat);
        for _ in 0..400 {
            if hi - lo <= BISECTION_RTOL * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if ln_upper_tail(kf, nf, mid) <= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    Ok((p_min, p_max))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandMethod {
    Dkw,
    ChernoffBucket,
}

/// Which values get their own bucket.
///
/// Every nonzero value inside the window is its own bucket. Everything else
/// (zero-count values inside the window, all values outside it, and all
/// unobserved tail mass) shares one pooled bucket. Without a window the
/// histogram's support is used.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketPolicy {
    pub window: Option<(i64, i64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub value: i64,
    pub count: u64,
    pub phat: f64,
    pub pmin: f64,
    pub pmax: f64,
}

/// Per-value probability bounds that hold simultaneously with probability
/// at least `1 - α`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceBand {
    pub method: BandMethod,
    pub alpha: f64,
    pub alpha_per_bucket: f64,
    pub buckets: usize,
    pub policy: BucketPolicy,
    pub n: u64,
    pub resolution: u32,
    /// One row per value of the reporting window, zero counts included.
    pub rows: Vec<BandRow>,
    /// The pooled bucket: its observed count and bounds on its total mass.
    pub pooled: BandRow,
    /// DKW half-width of the CDF band at the same α.
    pub dkw_epsilon: f64,
}

impl ConfidenceBand {
    pub fn row(&self, value: i64) -> Option<&BandRow> {
        self.rows.iter().find(|r| r.value == value)
    }

    /// Upper bound on the probability of `value`, also for values outside
    /// the reporting window (which are bounded by the pooled bucket).
    pub fn pmax(&self, value: i64) -> f64 {
        self.row(value).map_or(self.pooled.pmax, |r| r.pmax)
    }

    pub fn pmin(&self, value: i64) -> f64 {
        self.row(value).map_or(0.0, |r| r.pmin)
    }

    /// Whether `p` lies inside the band for `value`.
    pub fn contains(&self, value: i64, p: f64) -> bool {
        self.pmin(value) <= p && p <= self.pmax(value)
    }

    /// Largest `pmax / phat - 1` and `1 - pmin / phat` over rows with
    /// `phat > 0` inside `[lo, hi]`.
    pub fn max_relative_error(&self, lo: i64, hi: i64) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.value >= lo && r.value <= hi && r.count > 0)
            .map(|r| (r.pmax / r.phat - 1.0).max(1.0 - r.pmin / r.phat))
            .fold(0.0, f64::max)
    }
}

fn window_of(hist: &Histogram, policy: &BucketPolicy) -> Result<(i64, i64)> {
    let (lo, hi) = match (policy.window, hist.min_value(), hist.max_value()) {
        (Some(w), _, _) => w,
        (None, Some(a), Some(b)) => (a, b),
        _ => return Err(Error::argument("confidence band of an empty histogram")),
    };
    if lo > hi {
        return Err(Error::argument(format!("empty reporting window [{lo}, {hi}]")));
    }
    Ok((lo, hi))
}

/// Chernoff per-bucket band with a union bound over the buckets.
pub fn confidence_band(hist: &Histogram, alpha: f64, policy: &BucketPolicy) -> Result<ConfidenceBand> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::argument(format!("α must lie in (0, 1), got {alpha}")));
    }
    let (lo, hi) = window_of(hist, policy)?;
    let n = hist.n();
    let in_window: Vec<(i64, u64)> = (lo..=hi).map(|v| (v, hist.count(v))).collect();
    let individual = in_window.iter().filter(|(_, c)| *c > 0).count();
    let pooled_count = n - in_window.iter().map(|(_, c)| c).sum::<u64>();
    let buckets = individual + 1;
    let alpha_per_bucket = alpha / buckets as f64;

    let (pool_min, pool_max) = chernoff_bucket_bounds(pooled_count, n, alpha_per_bucket)?;
    let pooled = BandRow {
        value: i64::MIN,
        count: pooled_count,
        phat: pooled_count as f64 / n as f64,
        pmin: pool_min,
        pmax: pool_max,
    };
    let rows = in_window
        .into_iter()
        .map(|(value, count)| {
            let phat = count as f64 / n as f64;
            let (pmin, pmax) = if count > 0 {
                chernoff_bucket_bounds(count, n, alpha_per_bucket)?
            } else {
                (0.0, pool_max)
            };
            Ok(BandRow {
                value,
                count,
                phat,
                pmin,
                pmax,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ConfidenceBand {
        method: BandMethod::ChernoffBucket,
        alpha,
        alpha_per_bucket,
        buckets,
        policy: *policy,
        n,
        resolution: hist.resolution(),
        rows,
        pooled,
        dkw_epsilon: dkw_epsilon(n, alpha)?,
    })
}

/// Per-value bounds implied by the DKW CDF band: a point mass is a CDF
/// difference, so it may move by at most `2ε`.
pub fn dkw_band(hist: &Histogram, alpha: f64, policy: &BucketPolicy) -> Result<ConfidenceBand> {
    let (lo, hi) = window_of(hist, policy)?;
    let n = hist.n();
    let eps = dkw_epsilon(n, alpha)?;
    let rows = (lo..=hi)
        .map(|value| {
            let count = hist.count(value);
            let phat = count as f64 / n as f64;
            BandRow {
                value,
                count,
                phat,
                pmin: (phat - 2.0 * eps).max(0.0),
                pmax: (phat + 2.0 * eps).min(1.0),
            }
        })
        .collect();
    let pooled_count = n - (lo..=hi).map(|v| hist.count(v)).sum::<u64>();
    let pooled_phat = pooled_count as f64 / n as f64;
    Ok(ConfidenceBand {
        method: BandMethod::Dkw,
        alpha,
        alpha_per_bucket: alpha,
        buckets: 1,
        policy: *policy,
        n,
        resolution: hist.resolution(),
        rows,
        pooled: BandRow {
            value: i64::MIN,
            count: pooled_count,
            phat: pooled_phat,
            pmin: (pooled_phat - 2.0 * eps).max(0.0),
            pmax: (pooled_phat + 2.0 * eps).min(1.0),
        },
        dkw_epsilon: eps,
    })
}

/// `sup_v |ECDF(v) - cdf(v)|` over the integers `v` in `[lo, hi]`.
pub fn ks_distance(hist: &Histogram, cdf: impl Fn(i64) -> f64, lo: i64, hi: i64) -> f64 {
    let n = hist.n() as f64;
    let mut below = 0u64;
    let mut worst: f64 = 0.0;
    for v in lo..=hi {
        below += hist.count(v);
        let emp = below as f64 / n;
        worst = worst.max((emp - cdf(v)).abs());
    }
    // values below `lo` were not accumulated; callers pass a covering range
    worst
}

/// Two-sample sup distance between the ECDFs of `a` and `b` in physical units.
pub fn ks_distance_two_sample(a: &Histogram, b: &Histogram) -> f64 {
    let mut points: Vec<(i64, u32)> = Vec::new();
    for h in [a, b] {
        points.extend(h.iter().filter(|(_, c)| *c > 0).map(|(v, _)| (v, h.resolution())));
    }
    let phys = |h: &Histogram, x: (i64, u32)| {
        // P(X <= x) with x = v / r exactly: compare v_h * r <= v * r_h
        let below: u64 = h
            .iter()
            .filter(|(w, _)| (*w as i128) * (x.1 as i128) <= (x.0 as i128) * (h.resolution() as i128))
            .map(|(_, c)| c)
            .sum();
        below as f64 / h.n() as f64
    };
    points
        .into_iter()
        .map(|x| (phys(a, x) - phys(b, x)).abs())
        .fold(0.0, f64::max)
}

/// Bounds on the standard deviation implied by a confidence band.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StddevInterval {
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
}

impl StddevInterval {
    pub fn relative_half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo) / self.estimate
    }
}

struct Slot {
    /// Expected squared distance from the reference mean per unit mass.
    spread: f64,
    cap: f64,
    kind: SlotKind,
}

#[derive(Clone, Copy)]
enum SlotKind {
    Point(usize),
    LeftTail,
    RightTail,
}

/// Extremal standard deviations over all pmfs inside `band`.
///
/// Every window value starts at its lower bound; the remaining mass is then
/// poured into the slots farthest from the estimated mean (for the upper
/// bound) or nearest to it (for the lower bound), each up to its upper bound.
/// Pooled mass, i.e. unobserved values, can only sit beyond the edges of the
/// window, spread geometrically with decay rate at least `lambda_min` per
/// physical unit.
pub fn stddev_interval(hist: &Histogram, band: &ConfidenceBand, lambda_min: f64) -> Result<StddevInterval> {
    if !(lambda_min > 0.0) {
        return Err(Error::argument("tail decay floor must be positive"));
    }
    let estimate = hist.stddev()?;
    let n = hist.n() as f64;
    let mean = hist.mean()? * hist.resolution() as f64;
    let rows = &band.rows;
    let (first, last) = match (rows.first(), rows.last()) {
        (Some(f), Some(l)) => (f.value as f64, l.value as f64),
        _ => return Err(Error::argument("band has no rows")),
    };

    let lower_sum: f64 = rows.iter().map(|r| r.pmin).sum::<f64>() + band.pooled.pmin;
    let upper_sum: f64 = rows
        .iter()
        .filter(|r| r.count > 0)
        .map(|r| r.pmax)
        .sum::<f64>()
        + band.pooled.pmax;
    if lower_sum > 1.0 + 1e-12 || upper_sum < 1.0 - 1e-12 {
        return Err(Error::Inconsistency(format!(
            "band cannot be renormalized: lower bounds sum to {lower_sum}, upper bounds to {upper_sum}"
        )));
    }

    let q = (-lambda_min / hist.resolution() as f64).exp();
    let ej = 1.0 / (1.0 - q);
    let ej2 = (1.0 + q) / ((1.0 - q) * (1.0 - q));
    let tail_mean = |kind: SlotKind| match kind {
        SlotKind::LeftTail => first - ej,
        SlotKind::RightTail => last + ej,
        SlotKind::Point(i) => rows[i].value as f64,
    };
    // E[(X - mean)^2] of the tail per unit mass
    let tail_spread = |kind: SlotKind| {
        let d = match kind {
            SlotKind::LeftTail => mean - first,
            SlotKind::RightTail => last - mean,
            SlotKind::Point(_) => unreachable!(),
        };
        d * d + 2.0 * d * ej + ej2
    };
    let tail_second = |kind: SlotKind| {
        // E[X^2] of the tail per unit mass
        let m = tail_mean(kind);
        m * m + (ej2 - ej * ej)
    };

    let extremal = |outward: bool| -> f64 {
        let mut mass: Vec<f64> = rows.iter().map(|r| r.pmin).collect();
        let mut tails = [0.0f64; 2];
        let mut slots: Vec<Slot> = rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.count > 0)
            .map(|(i, r)| Slot {
                spread: (r.value as f64 - mean).powi(2),
                cap: r.pmax - r.pmin,
                kind: SlotKind::Point(i),
            })
            .collect();
        for kind in [SlotKind::LeftTail, SlotKind::RightTail] {
            slots.push(Slot {
                spread: tail_spread(kind),
                cap: band.pooled.pmax,
                kind,
            });
        }
        slots.sort_by(|a, b| {
            let o = a.spread.total_cmp(&b.spread);
            if outward {
                o.reverse()
            } else {
                o
            }
        });
        // mandatory pooled mass goes to the first tail in fill order
        let mut pool_left = band.pooled.pmax - band.pooled.pmin;
        if band.pooled.pmin > 0.0 {
            let first_tail = slots
                .iter()
                .find(|s| !matches!(s.kind, SlotKind::Point(_)))
                .map(|s| s.kind)
                .unwrap();
            tails[matches!(first_tail, SlotKind::RightTail) as usize] += band.pooled.pmin;
        }
        let mut remaining = (1.0 - lower_sum).max(0.0);
        for slot in &slots {
            if remaining <= 0.0 {
                break;
            }
            let cap = match slot.kind {
                SlotKind::Point(_) => slot.cap,
                _ => pool_left.min(slot.cap),
            };
            let take = cap.min(remaining).max(0.0);
            match slot.kind {
                SlotKind::Point(i) => mass[i] += take,
                SlotKind::LeftTail => {
                    tails[0] += take;
                    pool_left -= take;
                }
                SlotKind::RightTail => {
                    tails[1] += take;
                    pool_left -= take;
                }
            }
            remaining -= take;
        }

        let mut total = 0.0;
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for (r, &p) in rows.iter().zip(&mass) {
            let x = r.value as f64 - mean;
            total += p;
            m1 += p * x;
            m2 += p * x * x;
        }
        for (kind, &p) in [SlotKind::LeftTail, SlotKind::RightTail].iter().zip(&tails) {
            if p > 0.0 {
                let mu = tail_mean(*kind) - mean;
                let second = tail_second(*kind) - 2.0 * mean * tail_mean(*kind) + mean * mean;
                total += p;
                m1 += p * mu;
                m2 += p * second;
            }
        }
        let mu = m1 / total;
        let var = (m2 / total - mu * mu).max(0.0);
        (var * n / (n - 1.0)).sqrt() / hist.resolution() as f64
    };

    let lo = extremal(false).min(estimate);
    let hi = extremal(true).max(estimate);
    Ok(StddevInterval { estimate, lo, hi })
}

/// Percentile bootstrap interval for the standard deviation, resampling the
/// histogram multinomially `resamples` times. The central `1 - alpha` range
/// of the resampled deviations is returned.
pub fn bootstrap_stddev_interval(
    hist: &Histogram,
    resamples: usize,
    alpha: f64,
    seed: u64,
) -> Result<StddevInterval> {
    if resamples < 2 {
        return Err(Error::argument("bootstrap needs at least 2 resamples"));
    }
    let estimate = hist.stddev()?;
    let n = hist.n();
    let counts = hist.counts();
    let mut sigmas = Vec::with_capacity(resamples);
    let mut draw = vec![0u64; counts.len()];
    for r in 0..resamples {
        let mut rng = derive_stream(seed, r as u64);
        let mut left = n;
        let mut mass_left = n;
        for (slot, &c) in draw.iter_mut().zip(counts) {
            if mass_left == 0 || left == 0 {
                *slot = 0;
                continue;
            }
            let p = (c as f64 / mass_left as f64).clamp(0.0, 1.0);
            let k = if p >= 1.0 {
                left
            } else {
                Binomial::new(left, p)
                    .map_err(|e| Error::Inconsistency(format!("binomial resample: {e}")))?
                    .sample(&mut rng)
            };
            *slot = k;
            left -= k;
            mass_left -= c;
        }
        let resampled = Histogram::from_counts(hist.offset(), draw.clone(), hist.resolution())?;
        sigmas.push(resampled.stddev()?);
    }
    sigmas.sort_by(f64::total_cmp);
    let b = resamples as f64;
    let lo_idx = ((alpha / 2.0) * b).floor() as usize;
    let hi_idx = (((1.0 - alpha / 2.0) * b).ceil() as usize).clamp(1, resamples) - 1;
    Ok(StddevInterval {
        estimate,
        lo: sigmas[lo_idx.min(resamples - 1)],
        hi: sigmas[hi_idx],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn dkw_examples() {
        assert!((dkw_epsilon(25_000_000, 0.01).unwrap() - 0.00032552).abs() < 5e-9);
        assert_eq!(dkw_epsilon(123, 2.0).unwrap(), 0.0);
        assert!((dkw_epsilon(10_000, 0.05).unwrap() - 0.013581).abs() < 5e-7);
        assert!(dkw_epsilon(0, 0.1).is_err());
        assert!(dkw_epsilon(10, 0.0).is_err());
        assert!(dkw_epsilon(10, 2.5).is_err());
    }

    #[test]
    fn dkw_is_monotone() {
        let mut last = f64::INFINITY;
        for n in [1u64, 10, 100, 10_000, 1_000_000] {
            let e = dkw_epsilon(n, 0.01).unwrap();
            assert!(e < last);
            last = e;
        }
        assert!(dkw_epsilon(100, 0.001).unwrap() > dkw_epsilon(100, 0.01).unwrap());
    }

    #[test]
    fn chernoff_zero_count_closed_form() {
        let (pmin, pmax) = chernoff_bucket_bounds(0, 1_000_000, 0.01).unwrap();
        assert_eq!(pmin, 0.0);
        assert_relative_eq!(pmax, 2.0 * 100f64.ln() / 1e6, max_relative = 2e-9);
    }

    #[test]
    fn chernoff_full_count() {
        let (pmin, pmax) = chernoff_bucket_bounds(1000, 1000, 0.01).unwrap();
        assert_eq!(pmax, 1.0);
        assert!(pmin < 1.0 && pmin > 0.9);
    }

    #[test]
    fn chernoff_half() {
        let (pmin, pmax) = chernoff_bucket_bounds(5_000_000, 10_000_000, 1e-3).unwrap();
        assert!(pmin < 0.5 && pmax > 0.5);
        assert!(pmax - 0.5 < 1e-3 && 0.5 - pmin < 1e-3);
        // the bisection stops where the bound crosses α'
        let ln_a = 1e-3f64.ln();
        assert!((ln_lower_tail(5e6, 1e7, pmax) - ln_a).abs() < 1e-3);
        assert!((ln_upper_tail(5e6, 1e7, pmin) - ln_a).abs() < 1e-3);
    }

    #[test]
    fn chernoff_rejects_bad_arguments() {
        assert!(chernoff_bucket_bounds(5, 4, 0.1).is_err());
        assert!(chernoff_bucket_bounds(0, 0, 0.1).is_err());
        assert!(chernoff_bucket_bounds(1, 4, 1.0).is_err());
    }

    #[test]
    fn single_value_band() {
        let h = Histogram::from_counts(3, vec![1_000_000], 1).unwrap();
        let band = confidence_band(&h, 0.01, &BucketPolicy::default()).unwrap();
        assert_eq!(band.buckets, 2);
        assert_eq!(band.row(3).unwrap().pmax, 1.0);
        assert!(band.pooled.pmax < 2e-5);
        assert_relative_eq!(band.pooled.pmax, 2.0 * 200f64.ln() / 1e6, max_relative = 2e-9);
    }

    #[test]
    fn band_contains_estimate() {
        let h = Histogram::from_counts(-2, vec![3, 0, 50, 400, 41, 6], 1).unwrap();
        for band in [
            confidence_band(&h, 0.01, &BucketPolicy::default()).unwrap(),
            dkw_band(&h, 0.01, &BucketPolicy::default()).unwrap(),
        ] {
            for r in &band.rows {
                assert!(r.pmin <= r.phat && r.phat <= r.pmax, "{r:?}");
            }
        }
    }

    #[test]
    fn windowed_policy_pools_outside_values() {
        let h = Histogram::from_counts(0, vec![5, 100, 200, 100, 5], 1).unwrap();
        let band = confidence_band(&h, 0.01, &BucketPolicy { window: Some((1, 3)) }).unwrap();
        assert_eq!(band.buckets, 4);
        assert_eq!(band.pooled.count, 10);
        assert!(band.pooled.pmin > 0.0);
    }

    #[test]
    fn point_band_gives_point_interval() {
        let h = Histogram::from_counts(0, vec![10, 40, 35, 15], 1).unwrap();
        let mut band = confidence_band(&h, 0.01, &BucketPolicy::default()).unwrap();
        for r in &mut band.rows {
            r.pmin = r.phat;
            r.pmax = r.phat;
        }
        band.pooled.pmax = 0.0;
        let iv = stddev_interval(&h, &band, 2.0).unwrap();
        assert_relative_eq!(iv.lo, iv.estimate, max_relative = 1e-12);
        assert_relative_eq!(iv.hi, iv.estimate, max_relative = 1e-12);
    }

    #[test]
    fn two_point_interval_straddles_and_shrinks() {
        let mut last = f64::INFINITY;
        for n in [1_000u64, 100_000, 10_000_000] {
            let h = Histogram::from_counts(0, vec![n / 2, n / 2], 1).unwrap();
            let band = confidence_band(&h, 0.01, &BucketPolicy::default()).unwrap();
            let iv = stddev_interval(&h, &band, 2.0).unwrap();
            assert!(iv.lo < 0.5 && iv.hi > 0.5, "{iv:?}");
            let width = iv.hi - iv.lo;
            assert!(width < last);
            last = width;
        }
    }

    #[test]
    fn infeasible_band_is_reported() {
        let h = Histogram::from_counts(0, vec![50, 50], 1).unwrap();
        let mut band = confidence_band(&h, 0.01, &BucketPolicy::default()).unwrap();
        for r in &mut band.rows {
            r.pmin = 0.7;
        }
        assert!(matches!(
            stddev_interval(&h, &band, 2.0),
            Err(Error::Inconsistency(_))
        ));
    }

    #[test]
    fn bootstrap_brackets_estimate() {
        let h = Histogram::from_counts(0, vec![1000, 4000, 3000, 2000], 1).unwrap();
        let iv = bootstrap_stddev_interval(&h, 200, 0.05, 9).unwrap();
        assert!(iv.lo < iv.estimate && iv.estimate < iv.hi, "{iv:?}");
        assert!(iv.relative_half_width() < 0.05);
    }

    #[test]
    fn two_sample_distance_respects_resolution() {
        let a = Histogram::from_values([0, 1, 1, 2], 1);
        let b = Histogram::from_values([0, 2, 2, 4], 2);
        assert_eq!(ks_distance_two_sample(&a, &b), 0.0);
        let c = Histogram::from_values([0, 0, 0, 2], 1);
        assert!((ks_distance_two_sample(&a, &c) - 0.5).abs() < 1e-15);
    }
}
