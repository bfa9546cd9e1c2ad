use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Histogram;
use crate::error::{Error, Result};

/// Ordinary least-squares line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Euclidean norm of the residuals.
    pub residual: f64,
}

fn least_squares(xs: &[f64], ys: &[f64]) -> LineFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        .sqrt();
    LineFit {
        slope,
        intercept,
        residual,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Coordinates {
    /// `ln σ` against `ln a`.
    #[serde(rename = "log-log")]
    LogLog,
    /// `σ` against `ln ln a`.
    #[serde(rename = "loglog-lin")]
    LogLogLin,
    /// `σ` against `ln a`.
    #[serde(rename = "log-lin")]
    LogLin,
}

impl fmt::Display for Coordinates {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Coordinates::LogLog => "log-log",
            Coordinates::LogLogLin => "loglog-lin",
            Coordinates::LogLin => "log-lin",
        })
    }
}

impl FromStr for Coordinates {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log-log" => Ok(Coordinates::LogLog),
            "loglog-lin" => Ok(Coordinates::LogLogLin),
            "log-lin" => Ok(Coordinates::LogLin),
            _ => Err(Error::config(format!("unknown coordinate system '{s}'"))),
        }
    }
}

/// Slope of `(axis, value)` points in the given coordinate system.
pub fn fit_power_law(points: &[(f64, f64)], coords: Coordinates) -> Result<LineFit> {
    if points.len() < 3 {
        return Err(Error::argument(format!(
            "a slope fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for &(a, v) in points {
        let ok = match coords {
            Coordinates::LogLog => a > 0.0 && v > 0.0,
            Coordinates::LogLin => a > 0.0,
            Coordinates::LogLogLin => a > 1.0,
        };
        if !ok {
            return Err(Error::argument(format!(
                "point ({a}, {v}) is outside the domain of {coords} coordinates"
            )));
        }
        let (x, y) = match coords {
            Coordinates::LogLog => (a.ln(), v.ln()),
            Coordinates::LogLin => (a.ln(), v),
            Coordinates::LogLogLin => (a.ln().ln(), v),
        };
        xs.push(x);
        ys.push(y);
    }
    Ok(least_squares(&xs, &ys))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailSide {
    Left,
    Right,
    /// Average of `p(k)` and `p(-k)`.
    Pooled,
}

impl FromStr for TailSide {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(TailSide::Left),
            "right" => Ok(TailSide::Right),
            "pooled" => Ok(TailSide::Pooled),
            _ => Err(Error::config(format!("unknown tail side '{s}'"))),
        }
    }
}

/// Exponential decay `p(k) ∝ e^{-λ|k|}` fitted to part of a pmf.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    /// Decay rate per physical unit.
    pub lambda: f64,
    pub k_lo: i64,
    pub k_hi: i64,
    pub side: TailSide,
    pub residual: f64,
}

/// Fits `ln p̂(k)` against `|k|` over `k_lo <= |k| <= k_hi` (scaled units).
/// `k = 0` is never part of the fit.
pub fn fit_exponential_tail(hist: &Histogram, k_lo: i64, k_hi: i64, side: TailSide) -> Result<TailFit> {
    if k_lo < 1 || k_hi <= k_lo {
        return Err(Error::argument(format!(
            "tail fit range must satisfy 1 <= k_lo < k_hi, got [{k_lo}, {k_hi}]"
        )));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in k_lo..=k_hi {
        let needed: &[i64] = match side {
            TailSide::Left => &[-k],
            TailSide::Right => &[k],
            TailSide::Pooled => &[-k, k],
        };
        if let Some(&zero) = needed.iter().find(|&&v| hist.count(v) == 0) {
            return Err(Error::argument(format!(
                "tail fit needs nonzero counts, but value {zero} was never observed"
            )));
        }
        let p = needed.iter().map(|&v| hist.phat(v)).sum::<f64>() / needed.len() as f64;
        xs.push(hist.physical(k));
        ys.push(p.ln());
    }
    let line = least_squares(&xs, &ys);
    Ok(TailFit {
        lambda: -line.slope,
        k_lo,
        k_hi,
        side,
        residual: line.residual,
    })
}
