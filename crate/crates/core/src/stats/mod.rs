//! Estimators and error bounds for delay and skew distributions.

mod bounds;
mod fit;
mod histogram;
mod normal;
mod qq;

pub use bounds::{
    bootstrap_stddev_interval, chernoff_bucket_bounds, confidence_band, dkw_band, dkw_epsilon,
    dkw_sample_size, ks_distance, ks_distance_two_sample, stddev_interval, BandMethod, BandRow,
    BucketPolicy, ConfidenceBand, StddevInterval,
};
pub use fit::{fit_exponential_tail, fit_power_law, Coordinates, LineFit, TailFit, TailSide};
pub use histogram::{empirical_stddev, Histogram};
pub use normal::normal_quantile;
pub use qq::{ecdf_and_qq, QqPoint};
