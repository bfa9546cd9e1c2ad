use proptest::prelude::*;
use rand_xoshiro::rand_core::{RngCore as _, SeedableRng};
use trix_core::grid::{simulate_sample, ConeSpec, DelayModel};
use trix_core::rng::{derive_stream, next_delay, parse_seed, RngAlgorithm, RngStream, Xoshiro512StarStar};

/// Outputs of the reference C implementation for the state `[1, 2, ..., 8]`.
const REFERENCE: [u64; 10] = [
    11520,
    0,
    23040,
    23667840,
    144955163520,
    303992986974289920,
    25332796375735680,
    296904390158016,
    13911081092387501979,
    15304787717237593024,
];

#[test]
fn xoshiro_matches_reference_vectors() {
    let mut g = Xoshiro512StarStar::from_state([1, 2, 3, 4, 5, 6, 7, 8]);
    for &e in &REFERENCE {
        assert_eq!(g.next_u64(), e);
    }
}

fn reference_impl(state: [u64; 8]) -> rand_xoshiro::Xoshiro512StarStar {
    let mut seed = rand_xoshiro::Seed512([0; 64]);
    for (chunk, w) in seed.0.chunks_exact_mut(8).zip(state) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    rand_xoshiro::Xoshiro512StarStar::from_seed(seed)
}

proptest! {
    #[test]
    fn xoshiro_agrees_with_independent_implementation(state in prop::array::uniform8(any::<u64>())) {
        prop_assume!(state.iter().any(|&w| w != 0));
        let mut ours = Xoshiro512StarStar::from_state(state);
        let mut theirs = reference_impl(state);
        for _ in 0..64 {
            prop_assert_eq!(ours.next_u64(), theirs.next_u64());
        }
    }

    #[test]
    fn derived_streams_are_reproducible(seed in any::<u64>(), idx in any::<u64>()) {
        let mut a = derive_stream(seed, idx);
        let mut b = derive_stream(seed, idx);
        for _ in 0..16 {
            prop_assert_eq!(a.next_word(), b.next_word());
        }
    }

    #[test]
    fn neighbouring_origins_differ(seed in any::<u64>(), idx in 0..u64::MAX) {
        let first = derive_stream(seed, idx).next_word();
        prop_assert_ne!(first, derive_stream(seed, idx + 1).next_word());
        prop_assert_ne!(first, derive_stream(seed.wrapping_add(1), idx).next_word());
    }

    #[test]
    fn bit_cursor_reads_words_lsb_first(seed in any::<u64>(), widths in prop::collection::vec(1u32..=64, 1..40)) {
        let mut words = derive_stream(seed, 0);
        let mut bits = derive_stream(seed, 0);
        let mut buf: u128 = 0;
        let mut have = 0u32;
        for k in widths {
            if have < k {
                buf |= (words.next_word() as u128) << have;
                have += 64;
            }
            let expected = (buf & ((1u128 << k) - 1)) as u64;
            buf >>= k;
            have -= k;
            prop_assert_eq!(bits.take_bits(k), expected);
        }
    }
}

#[test]
fn derived_state_is_never_zero() {
    for idx in 0..1000 {
        let mut s = derive_stream(0, idx);
        assert!((0..8).any(|_| s.next_word() != 0));
    }
}

#[test]
fn binary_frequency_within_five_sigma() {
    let mut s = derive_stream(2024, 0);
    let n = 1_000_000;
    let ones: u64 = (0..n)
        .map(|_| next_delay(&mut s, &DelayModel::BinaryFairCoin).unwrap() as u64)
        .sum();
    let f = ones as f64 / n as f64;
    assert!((0.498..=0.502).contains(&f), "{f}");
}

#[test]
fn ternary_frequencies_within_five_sigma() {
    let mut s = derive_stream(2024, 1);
    let n = 3_000_000;
    let mut counts = [0u64; 3];
    for _ in 0..n {
        counts[next_delay(&mut s, &DelayModel::TernaryUniform).unwrap() as usize] += 1;
    }
    for c in counts {
        let f = c as f64 / n as f64;
        assert!((0.331..=0.336).contains(&f), "{counts:?}");
    }
}

#[test]
fn ternary_rejection_maps_every_two_bit_pattern() {
    // Every pattern 0..=3 in the first two bits, found by scanning sample
    // indices; patterns 0, 1, 2 are accepted verbatim, pattern 3 redraws.
    for pattern in 0u64..4 {
        let idx = (0..).find(|&i| derive_stream(11, i).next_word() & 3 == pattern).unwrap();
        let word = derive_stream(11, idx).next_word();
        let v = derive_stream(11, idx).take_ternary() as u64;
        if pattern < 3 {
            assert_eq!(v, pattern);
        } else {
            let next = (1..32).map(|j| (word >> (2 * j)) & 3).find(|&b| b != 3).unwrap();
            assert_eq!(v, next);
        }
    }
}

#[test]
fn ternary_rejects_pattern_three_and_redraws() {
    let mut probe = derive_stream(5, 5);
    let mut s = derive_stream(5, 5);
    for _ in 0..10_000 {
        let expect = loop {
            let v = probe.take_bits(2);
            if v != 3 {
                break v;
            }
        };
        assert_eq!(s.take_ternary() as u64, expect);
    }
}

#[test]
fn deterministic_models_leave_the_stream_untouched() {
    let mut s = derive_stream(9, 9);
    let before = s.clone();
    assert_eq!(next_delay(&mut s, &DelayModel::Constant { delay: 0 }), None);
    let spec = ConeSpec::new(6, 2);
    simulate_sample(spec, &DelayModel::Constant { delay: 0 }, &mut s, false).unwrap();
    simulate_sample(spec, &DelayModel::Split { boundary: 1 }, &mut s, true).unwrap();
    assert_eq!(s, before);
}

#[test]
fn os_entropy_streams_produce_varied_output() {
    let mut s = RngStream::for_sample(RngAlgorithm::OsEntropy, 0, 0);
    let words: Vec<u64> = (0..600).map(|_| s.next_word()).collect();
    let distinct: std::collections::BTreeSet<_> = words.iter().collect();
    assert!(distinct.len() > 590);
    assert_eq!(s.algorithm(), RngAlgorithm::OsEntropy);
    assert_eq!(s.origin(), None);
}

#[test]
fn seeds_parse_in_decimal_and_hex() {
    assert_eq!(parse_seed("42").unwrap(), 42);
    assert_eq!(parse_seed("0xFFFFFFFFFFFFFFFF").unwrap(), u64::MAX);
    assert!(parse_seed("-1").is_err());
    assert!(parse_seed("0x1_0000_0000_0000_0000").is_err());
}

proptest! {
    #[test]
    fn bulk_ternary_matches_single_draws(seed in any::<u64>(), skip in 0u32..5, lens in prop::collection::vec(1usize..100, 1..6)) {
        let mut slow = derive_stream(seed, 9);
        let mut fast = derive_stream(seed, 9);
        if skip > 0 {
            slow.take_bits(skip);
            fast.take_bits(skip);
        }
        let mut cursor = fast.detach_xoshiro().unwrap();
        for len in lens {
            let want: Vec<_> = (0..len).map(|_| slow.take_ternary()).collect();
            let mut got = vec![0; len];
            cursor.fill_ternary(&mut got);
            prop_assert_eq!(got, want);
        }
        fast.attach(cursor);
        prop_assert_eq!(fast.take_bits(64), slow.take_bits(64));
    }
}
