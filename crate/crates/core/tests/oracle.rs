use std::collections::BTreeMap;

use num_rational::Ratio;
use trix_core::grid::DelayModel;
use trix_core::oracle::{exact_delay_pmf, exact_mean, exact_skew_pmf, EnumerationGuard, ExactPmf};
use trix_core::Error;

/// Independent oracle: lists the wires of the cone in lexicographic
/// `(y, x, c)` order, enumerates every assignment as an integer in base
/// `|support|`, evaluates the recurrence by direct recursion and histograms
/// `d(delta, h) - d(0, h)` (or `d(0, h)` when `delta` is `None`).
fn brute_force(h: i64, delta: Option<i64>, support: &[i64]) -> BTreeMap<i64, u64> {
    let span = delta.unwrap_or(0);
    let mut wires = Vec::new();
    for y in 1..=h {
        for x in -(h - y)..=span + (h - y) {
            for c in -1..=1 {
                wires.push((y, x, c));
            }
        }
    }
    let index: BTreeMap<(i64, i64, i64), usize> = wires.iter().enumerate().map(|(i, &w)| (w, i)).collect();
    let radix = support.len() as u64;
    let total = radix.pow(wires.len() as u32);
    let mut out = BTreeMap::new();
    let mut digits = vec![0usize; wires.len()];
    for a in 0..total {
        let mut rest = a;
        for d in digits.iter_mut() {
            *d = (rest % radix) as usize;
            rest /= radix;
        }
        fn time(x: i64, y: i64, digits: &[usize], index: &BTreeMap<(i64, i64, i64), usize>, support: &[i64]) -> i64 {
            if y == 0 {
                return 0;
            }
            let mut v: Vec<i64> = (-1..=1)
                .map(|c| time(x + c, y - 1, digits, index, support) + support[digits[index[&(y, x, c)]]])
                .collect();
            v.sort_unstable();
            v[1]
        }
        let d0 = time(0, h, &digits, &index, support);
        let value = match delta {
            None => d0,
            Some(d) => time(d, h, &digits, &index, support) - d0,
        };
        *out.entry(value).or_insert(0) += 1;
    }
    out
}

fn guard() -> EnumerationGuard {
    EnumerationGuard::default()
}

fn assert_same(pmf: &ExactPmf, oracle: &BTreeMap<i64, u64>) {
    assert_eq!(&pmf.counts, oracle);
    assert_eq!(pmf.total(), pmf.denominator);
}

#[test]
fn delay_pmfs_match_brute_force() {
    for h in 0..=2 {
        assert_same(&exact_delay_pmf(h, &DelayModel::BinaryFairCoin, &guard()).unwrap(), &brute_force(h as i64, None, &[0, 1]));
    }
    assert_same(
        &exact_delay_pmf(1, &DelayModel::TernaryUniform, &guard()).unwrap(),
        &brute_force(1, None, &[0, 1, 2]),
    );
    assert_same(
        &exact_delay_pmf(2, &DelayModel::TernaryUniform, &guard()).unwrap(),
        &brute_force(2, None, &[0, 1, 2]),
    );
}

#[test]
fn skew_pmfs_match_brute_force() {
    for (h, d) in [(1, 1), (1, 2), (1, 3), (2, 1)] {
        assert_same(
            &exact_skew_pmf(h, d, &DelayModel::BinaryFairCoin, &guard()).unwrap(),
            &brute_force(h as i64, Some(d as i64), &[0, 1]),
        );
    }
    assert_same(
        &exact_skew_pmf(1, 1, &DelayModel::TernaryUniform, &guard()).unwrap(),
        &brute_force(1, Some(1), &[0, 1, 2]),
    );
}

fn fractions(pmf: &ExactPmf) -> Vec<(i64, Ratio<u64>)> {
    pmf.counts.keys().map(|&v| (v, pmf.probability(v))).collect()
}

#[test]
fn frozen_regression_values() {
    let r = Ratio::new;
    let b = DelayModel::BinaryFairCoin;
    assert_eq!(fractions(&exact_delay_pmf(0, &b, &guard()).unwrap()), vec![(0, r(1, 1))]);
    assert_eq!(fractions(&exact_delay_pmf(1, &b, &guard()).unwrap()), vec![(0, r(1, 2)), (1, r(1, 2))]);
    let h2 = exact_delay_pmf(2, &b, &guard()).unwrap();
    assert_eq!(h2.denominator, 4096);
    assert_eq!(fractions(&h2), vec![(0, r(5, 32)), (1, r(22, 32)), (2, r(5, 32))]);
    let s1 = exact_skew_pmf(1, 1, &b, &guard()).unwrap();
    assert_eq!(s1.denominator, 64);
    assert_eq!(fractions(&s1), vec![(-1, r(1, 4)), (0, r(1, 2)), (1, r(1, 4))]);
    assert_eq!(fractions(&exact_skew_pmf(1, 2, &b, &guard()).unwrap()), fractions(&s1));
    assert_eq!(fractions(&exact_skew_pmf(7, 0, &b, &guard()).unwrap()), vec![(0, r(1, 1))]);
    // H = 2 skew, cross-checked against brute force and frozen
    let s2 = exact_skew_pmf(2, 1, &b, &guard()).unwrap();
    assert_eq!(s2.denominator, 1 << 18);
    assert_eq!(s2.counts, BTreeMap::from([(-2, 2048), (-1, 55296), (0, 147456), (1, 55296), (2, 2048)]));
}

#[test]
fn means_are_exact() {
    let b = DelayModel::BinaryFairCoin;
    assert_eq!(exact_mean(&exact_delay_pmf(2, &b, &guard()).unwrap()), Ratio::from_integer(1));
    assert_eq!(exact_mean(&exact_skew_pmf(2, 1, &b, &guard()).unwrap()), Ratio::from_integer(0));
    for h in 0..=2 {
        let t = exact_delay_pmf(h, &DelayModel::TernaryUniform, &guard()).unwrap();
        assert_eq!(exact_mean(&t), Ratio::new(h as i128, 2));
    }
}

#[test]
fn height_three_is_enumerable_and_symmetric() {
    let pmf = exact_delay_pmf(3, &DelayModel::BinaryFairCoin, &guard()).unwrap();
    assert_eq!(pmf.wires, 27);
    assert_eq!(pmf.denominator, 1 << 27);
    assert_eq!(pmf.total(), 1 << 27);
    assert_eq!(exact_mean(&pmf), Ratio::new(3, 2));
    for (&k, &c) in &pmf.counts {
        assert_eq!(pmf.counts.get(&(3 - k)).copied(), Some(c));
    }
}

#[test]
fn symmetry_of_small_pmfs() {
    for h in 0..=2u32 {
        let pmf = exact_delay_pmf(h, &DelayModel::BinaryFairCoin, &guard()).unwrap();
        for (&k, &c) in &pmf.counts {
            assert_eq!(pmf.counts[&(h as i64 - k)], c);
        }
        let t = exact_delay_pmf(h, &DelayModel::TernaryUniform, &guard()).unwrap();
        for (&k, &c) in &t.counts {
            assert_eq!(t.counts[&(2 * h as i64 - k)], c);
        }
    }
    for (h, d) in [(1, 1), (1, 2), (2, 1), (2, 2)] {
        let pmf = exact_skew_pmf(h, d, &DelayModel::BinaryFairCoin, &guard()).unwrap();
        for (&k, &c) in &pmf.counts {
            assert_eq!(pmf.counts[&-k], c);
        }
    }
}

#[test]
fn guard_blocks_and_force_overrides() {
    let err = exact_skew_pmf(3, 1, &DelayModel::BinaryFairCoin, &guard()).unwrap_err();
    assert!(matches!(err, Error::Guard { required, .. } if required == 1 << 36));
    let small = EnumerationGuard {
        max_assignments: 100,
        force: false,
    };
    assert!(exact_delay_pmf(2, &DelayModel::BinaryFairCoin, &small).is_err());
    let forced = EnumerationGuard {
        max_assignments: 100,
        force: true,
    };
    assert_eq!(exact_delay_pmf(2, &DelayModel::BinaryFairCoin, &forced).unwrap().denominator, 4096);
}
