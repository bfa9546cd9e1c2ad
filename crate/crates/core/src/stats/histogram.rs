use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact counts of an integer-valued statistic in scaled units.
///
/// `counts[i]` is the number of observations of `offset + i`. A non-empty
/// histogram never has zero counts at either end.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    offset: i64,
    counts: Vec<u64>,
    n: u64,
    /// Scaled units per physical unit.
    resolution: u32,
}

impl Default for Histogram {
    fn default() -> Self {
        Self::new(1)
    }
}

impl Histogram {
    pub fn new(resolution: u32) -> Self {
        assert!(resolution > 0, "resolution must be positive");
        Self {
            offset: 0,
            counts: Vec::new(),
            n: 0,
            resolution,
        }
    }

    /// Builds a histogram from dense counts starting at `offset`. Zero counts
    /// at either end are trimmed.
    pub fn from_counts(offset: i64, counts: Vec<u64>, resolution: u32) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::argument("resolution must be positive"));
        }
        let first = counts.iter().position(|&c| c > 0);
        let Some(first) = first else {
            return Ok(Self::new(resolution));
        };
        let last = counts.iter().rposition(|&c| c > 0).unwrap();
        let counts = counts[first..=last].to_vec();
        let n = counts.iter().sum();
        Ok(Self {
            offset: offset + first as i64,
            counts,
            n,
            resolution,
        })
    }

    /// Builds a histogram from `(value, count)` pairs; repeated values add up.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (i64, u64)>, resolution: u32) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::argument("resolution must be positive"));
        }
        let mut h = Self::new(resolution);
        for (v, c) in pairs {
            h.record_n(v, c);
        }
        Ok(h)
    }

    pub fn from_values(values: impl IntoIterator<Item = i64>, resolution: u32) -> Self {
        let mut h = Self::new(resolution);
        for v in values {
            h.record(v);
        }
        h
    }

    #[inline]
    pub fn record(&mut self, value: i64) {
        self.record_n(value, 1);
    }

    pub fn record_n(&mut self, value: i64, count: u64) {
        if count == 0 {
            return;
        }
        if self.counts.is_empty() {
            self.offset = value;
            self.counts.push(0);
        } else if value < self.offset {
            let grow = (self.offset - value) as usize;
            self.counts.splice(0..0, std::iter::repeat_n(0, grow));
            self.offset = value;
        } else if value >= self.offset + self.counts.len() as i64 {
            self.counts.resize((value - self.offset) as usize + 1, 0);
        }
        self.counts[(value - self.offset) as usize] += count;
        self.n += count;
    }

    /// Adds another histogram's counts. Merging is associative and commutative.
    pub fn merge(&mut self, other: &Histogram) {
        assert_eq!(
            self.resolution, other.resolution,
            "cannot merge histograms of different resolution"
        );
        for (v, c) in other.iter() {
            self.record_n(v, c);
        }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn min_value(&self) -> Option<i64> {
        (!self.counts.is_empty()).then_some(self.offset)
    }

    pub fn max_value(&self) -> Option<i64> {
        (!self.counts.is_empty()).then(|| self.offset + self.counts.len() as i64 - 1)
    }

    pub fn count(&self, value: i64) -> u64 {
        if value < self.offset {
            return 0;
        }
        self.counts
            .get((value - self.offset) as usize)
            .copied()
            .unwrap_or(0)
    }

    /// Empirical probability `count / n`.
    pub fn phat(&self, value: i64) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.count(value) as f64 / self.n as f64
        }
    }

    /// Every value in the support range with its count, zero counts included.
    pub fn iter(&self) -> impl Iterator<Item = (i64, u64)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .map(move |(i, &c)| (self.offset + i as i64, c))
    }

    /// Number of values with a nonzero count.
    pub fn nonzero(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Converts a scaled value to physical units.
    pub fn physical(&self, value: i64) -> f64 {
        value as f64 / self.resolution as f64
    }

    /// Empirical CDF `#{v <= value} / n`.
    pub fn ecdf(&self, value: i64) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let below: u64 = self.iter().take_while(|&(v, _)| v <= value).map(|(_, c)| c).sum();
        below as f64 / self.n as f64
    }

    /// Integer sums `(Σ c·k, Σ c·k²)` with `k = value - offset`.
    fn shifted_moments(&self) -> (i128, i128) {
        self.counts
            .iter()
            .enumerate()
            .fold((0i128, 0i128), |(s1, s2), (k, &c)| {
                let k = k as i128;
                let c = c as i128;
                (s1 + c * k, s2 + c * k * k)
            })
    }

    /// Sample mean in physical units.
    pub fn mean(&self) -> Result<f64> {
        if self.n == 0 {
            return Err(Error::argument("mean of an empty histogram"));
        }
        let (s1, _) = self.shifted_moments();
        Ok((self.offset as f64 + s1 as f64 / self.n as f64) / self.resolution as f64)
    }

    /// Bessel-corrected sample standard deviation in physical units.
    ///
    /// The numerator `n·Σk² - (Σk)²` is exact; only the final division and
    /// square root are floating point.
    pub fn stddev(&self) -> Result<f64> {
        if self.n < 2 {
            return Err(Error::argument(format!(
                "standard deviation needs at least 2 samples, got {}",
                self.n
            )));
        }
        let (s1, s2) = self.shifted_moments();
        let n = self.n as i128;
        let numer = n * s2 - s1 * s1;
        let var = numer as f64 / (n * (n - 1)) as f64;
        Ok(var.sqrt() / self.resolution as f64)
    }
}

/// Bessel-corrected sample standard deviation of raw values.
pub fn empirical_stddev(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::argument(format!(
            "standard deviation needs at least 2 samples, got {}",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok((ss / (n - 1.0)).sqrt())
}
