//! Exact distributions by exhaustive enumeration of wire-delay assignments.
//!
//! Assignments are enumerated as a mixed-radix counter over the cone's wires
//! in draw order and every assignment is evaluated with the same
//! [`Simulator`] the Monte Carlo engine uses. Only the delay source differs.

use std::collections::BTreeMap;

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ConeSpec, DelayModel, IndexBits, Simulator, TableDelays, Time};
use crate::rng::derive_stream;

/// Upper limit on the number of assignments an enumeration may visit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnumerationGuard {
    pub max_assignments: u64,
    pub force: bool,
}

impl Default for EnumerationGuard {
    fn default() -> Self {
        Self {
            max_assignments: 1 << 30,
            force: false,
        }
    }
}

/// An exact probability mass function with a common denominator.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactPmf {
    /// Scaled value -> number of assignments producing it.
    pub counts: BTreeMap<i64, u64>,
    /// Number of assignments enumerated, `|support|^wires`.
    pub denominator: u64,
    pub wires: u64,
    pub resolution: u32,
}

impl ExactPmf {
    fn point(value: i64, resolution: u32) -> Self {
        Self {
            counts: BTreeMap::from([(value, 1)]),
            denominator: 1,
            wires: 0,
            resolution,
        }
    }

    /// Probability of `value` as a reduced fraction.
    pub fn probability(&self, value: i64) -> Ratio<u64> {
        Ratio::new(
            self.counts.get(&value).copied().unwrap_or(0),
            self.denominator,
        )
    }

    pub fn probability_f64(&self, value: i64) -> f64 {
        self.counts.get(&value).copied().unwrap_or(0) as f64 / self.denominator as f64
    }

    /// `P(X <= value)`.
    pub fn cdf_f64(&self, value: i64) -> f64 {
        let below: u64 = self.counts.range(..=value).map(|(_, c)| c).sum();
        below as f64 / self.denominator as f64
    }

    /// `value -> [numerator, denominator]`, reduced.
    pub fn fractions(&self) -> BTreeMap<i64, [u64; 2]> {
        self.counts
            .keys()
            .map(|&v| {
                let p = self.probability(v);
                (v, [*p.numer(), *p.denom()])
            })
            .collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }
}

fn assignments(cone: &ConeSpec, model: &DelayModel, guard: &EnumerationGuard) -> Result<u64> {
    let radix = model.support().len() as u64;
    let wires = cone.wire_count();
    let total = (radix as u128).checked_pow(wires as u32).filter(|_| wires < 4096);
    let total = match total {
        Some(t) if t <= u64::MAX as u128 => t as u64,
        _ => {
            return Err(Error::Guard {
                what: "exhaustive enumeration",
                required: u128::MAX,
                limit: guard.max_assignments as u128,
                hint: "; the assignment count does not fit in 64 bits, use Monte Carlo",
            })
        }
    };
    if total > guard.max_assignments && !guard.force {
        return Err(Error::Guard {
            what: "exhaustive enumeration",
            required: total as u128,
            limit: guard.max_assignments as u128,
            hint: ", or use Monte Carlo instead",
        });
    }
    Ok(total)
}

const CHUNK: u64 = 1 << 14;

/// Evaluates every assignment and histograms `observe(top)`.
fn enumerate<F>(
    cone: ConeSpec,
    model: &DelayModel,
    guard: &EnumerationGuard,
    observe: F,
) -> Result<ExactPmf>
where
    F: Fn(&[Time]) -> i64 + Sync,
{
    cone.validate(model)?;
    let resolution = model.resolution();
    if !model.is_stochastic() {
        let mut sim = Simulator::new();
        // deterministic models never draw; any stream will do
        let mut stream = derive_stream(0, 0);
        let v = observe(sim.run_model(&cone, model, &mut stream));
        let mut pmf = ExactPmf::point(v, resolution);
        pmf.wires = cone.wire_count();
        return Ok(pmf);
    }

    let total = assignments(&cone, model, guard)?;
    let wires = cone.wire_count() as usize;
    let radix = model.support().len() as Time;
    let chunks = total.div_ceil(CHUNK);

    let counts = (0..chunks)
        .into_par_iter()
        .fold(
            || (Simulator::new(), BTreeMap::<i64, u64>::new(), vec![0 as Time; wires]),
            |(mut sim, mut counts, mut digits), chunk| {
                let start = chunk * CHUNK;
                let end = (start + CHUNK).min(total);
                if radix == 2 {
                    for a in start..end {
                        *counts.entry(observe(sim.run(&cone, IndexBits::new(a), None))).or_default() += 1;
                    }
                } else {
                    let mut rest = start;
                    for d in digits.iter_mut() {
                        *d = (rest % radix as u64) as Time;
                        rest /= radix as u64;
                    }
                    for _ in start..end {
                        let v = observe(sim.run(&cone, TableDelays::new(&digits), None));
                        *counts.entry(v).or_default() += 1;
                        for d in digits.iter_mut() {
                            *d += 1;
                            if *d < radix {
                                break;
                            }
                            *d = 0;
                        }
                    }
                }
                (sim, counts, digits)
            },
        )
        .map(|(_, counts, _)| counts)
        .reduce(BTreeMap::new, |mut a, b| {
            for (v, c) in b {
                *a.entry(v).or_default() += c;
            }
            a
        });

    Ok(ExactPmf {
        counts,
        denominator: total,
        wires: wires as u64,
        resolution,
    })
}

/// Exact distribution of `d(0, H)` in scaled units.
pub fn exact_delay_pmf(height: u32, model: &DelayModel, guard: &EnumerationGuard) -> Result<ExactPmf> {
    enumerate(ConeSpec::new(height, 0), model, guard, |top| top[0] as i64)
}

/// Exact distribution of `d(δ, H) - d(0, H)` in scaled units.
pub fn exact_skew_pmf(
    height: u32,
    delta: u32,
    model: &DelayModel,
    guard: &EnumerationGuard,
) -> Result<ExactPmf> {
    if delta == 0 {
        return Ok(ExactPmf::point(0, model.resolution()));
    }
    enumerate(ConeSpec::new(height, delta), model, guard, move |top| {
        top[delta as usize] as i64 - top[0] as i64
    })
}

/// Exact expectation in physical units (scaled value / resolution).
pub fn exact_mean(pmf: &ExactPmf) -> Ratio<i128> {
    let weighted: i128 = pmf
        .counts
        .iter()
        .map(|(&v, &c)| v as i128 * c as i128)
        .sum();
    Ratio::new(weighted, pmf.denominator as i128 * pmf.resolution as i128)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary() -> DelayModel {
        DelayModel::BinaryFairCoin
    }

    #[test]
    fn height_zero_is_a_point_mass() {
        let pmf = exact_delay_pmf(0, &binary(), &EnumerationGuard::default()).unwrap();
        assert_eq!(pmf.counts, BTreeMap::from([(0, 1)]));
        assert_eq!(pmf.denominator, 1);
    }

    #[test]
    fn zero_distance_skew_is_a_point_mass() {
        let pmf = exact_skew_pmf(50, 0, &binary(), &EnumerationGuard::default()).unwrap();
        assert_eq!(pmf.probability(0), Ratio::from_integer(1));
    }

    #[test]
    fn guard_refuses_large_cones() {
        let err = exact_skew_pmf(3, 1, &binary(), &EnumerationGuard::default()).unwrap_err();
        assert!(matches!(err, Error::Guard { required, .. } if required == 1 << 36));
        assert!(exact_delay_pmf(9, &binary(), &EnumerationGuard::default()).is_err());
    }

    #[test]
    fn deterministic_models_give_point_masses() {
        let pmf = exact_skew_pmf(6, 1, &DelayModel::Split { boundary: 1 }, &Default::default())
            .unwrap();
        assert_eq!(pmf.counts, BTreeMap::from([(6, 1)]));
    }

    #[test]
    fn mean_of_point_mass() {
        assert_eq!(exact_mean(&ExactPmf::point(0, 1)), Ratio::from_integer(0));
    }

    #[test]
    fn ternary_means_are_in_physical_units() {
        let pmf = exact_delay_pmf(1, &DelayModel::TernaryUniform, &Default::default()).unwrap();
        assert_eq!(pmf.denominator, 27);
        assert_eq!(pmf.total(), 27);
        assert_eq!(exact_mean(&pmf), Ratio::new(1, 2));
    }
}
