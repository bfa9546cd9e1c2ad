use serde::{Deserialize, Serialize};

use super::{normal_quantile, Histogram};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QqPoint {
    /// Midpoint between two adjacent support values, in physical units.
    pub x: f64,
    /// `N(μ, σ²)` quantile at the empirical CDF value of `x`.
    pub quantile: f64,
}

/// Quantile-quantile data of `hist` against `N(mu, sigma²)`.
///
/// The empirical CDF is evaluated halfway between adjacent support values,
/// where it is unambiguous. Points whose CDF is 0 or 1 have no finite
/// quantile and are left out.
pub fn ecdf_and_qq(hist: &Histogram, mu: f64, sigma: f64) -> Result<Vec<QqPoint>> {
    if !(sigma > 0.0) {
        return Err(Error::argument(format!("QQ reference needs σ > 0, got {sigma}")));
    }
    if hist.is_empty() {
        return Ok(Vec::new());
    }
    let n = hist.n();
    let res = hist.resolution() as f64;
    let mut below = 0u64;
    let mut out = Vec::with_capacity(hist.counts().len());
    for (k, c) in hist.iter() {
        below += c;
        if below == 0 || below == n {
            continue;
        }
        let cdf = below as f64 / n as f64;
        out.push(QqPoint {
            x: (k as f64 + 0.5) / res,
            quantile: mu + sigma * normal_quantile(cdf),
        });
    }
    Ok(out)
}
