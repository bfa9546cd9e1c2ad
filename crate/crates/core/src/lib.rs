//! Simulation and statistical analysis of the TRIX clock-distribution grid.
//!
//! A TRIX grid is an infinitely wide stack of layers. Layer 0 pulses at time
//! 0; every node above it has three in-neighbours on the previous layer and
//! fires at the median of the three arrival times. Wire delays are i.i.d.
//! random variables (fair coin flips in the base model), so the pulse time
//! `d(x, H)` of a top-layer node and the skew `d(x + δ, H) - d(x, H)` between
//! two of them are random variables whose distributions this crate estimates.
//!
//! * [`grid`] evaluates one sample of the grid restricted to the finite
//!   dependency cone of the observed nodes.
//! * [`rng`] provides xoshiro512** streams derived per sample, so results do
//!   not depend on how work is scheduled.
//! * [`oracle`] enumerates every wire-delay assignment for small cones and
//!   returns exact rational distributions.
//! * [`stats`] holds histograms, DKW and Chernoff confidence bounds, QQ data
//!   and the exponent fits.
//! * [`experiments`] runs the batch scenarios and [`io`] reads and writes
//!   their CSV/JSON artifacts.

pub mod error;
pub mod experiments;
pub mod grid;
pub mod io;
pub mod oracle;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use grid::{
    complement_sample, extract_skew, median3, simulate_sample, ConeSpec, DelayModel, GridSample,
    Simulator, Time,
};
pub use oracle::{exact_delay_pmf, exact_mean, exact_skew_pmf, EnumerationGuard, ExactPmf};
pub use rng::{derive_stream, RngAlgorithm, RngStream};
pub use stats::Histogram;

/// Version tag written into every artifact together with the draw-order tag.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Identifies the order in which wire delays are drawn from a stream. Any
/// change to that order changes every seeded result and must bump this tag.
pub const DRAW_ORDER: &str = "draw-order-v1";
