//! Random streams for the Monte Carlo engine.
//!
//! Every sample owns its own stream, derived from `(master seed, sample
//! index)`. Aggregated results are therefore identical for any number of
//! workers and any scheduling order.
//!
//! Wire delays are read from a stream as a bit sequence: 64-bit outputs are
//! consumed least-significant bit first, a binary delay takes one bit and a
//! ternary delay takes two bits with the pattern `0b11` rejected.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DelayModel, Time};

/// The xoshiro512** generator (Blackman & Vigna).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Xoshiro512StarStar {
    s: [u64; 8],
}

/// Substituted when seed expansion produces the forbidden all-zero state.
const FALLBACK_STATE: [u64; 8] = [
    0x9e37_79b9_7f4a_7c15,
    0xbf58_476d_1ce4_e5b9,
    0x94d0_49bb_1331_11eb,
    0x2545_f491_4f6c_dd1d,
    0x6a09_e667_f3bc_c908,
    0xbb67_ae85_84ca_a73b,
    0x3c6e_f372_fe94_f82b,
    0xa54f_f53a_5f1d_36f1,
];

impl Xoshiro512StarStar {
    /// Builds a generator from a raw state. The all-zero state is a fixed
    /// point of the generator and is replaced by a constant non-zero state.
    pub fn from_state(s: [u64; 8]) -> Self {
        if s.iter().all(|&w| w == 0) {
            Self { s: FALLBACK_STATE }
        } else {
            Self { s }
        }
    }

    pub fn state(&self) -> [u64; 8] {
        self.s
    }

    #[inline(always)]
    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.s;
        let result = s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = s[1] << 11;

        s[2] ^= s[0];
        s[5] ^= s[1];
        s[1] ^= s[2];
        s[7] ^= s[3];
        s[3] ^= s[4];
        s[4] ^= s[5];
        s[0] ^= s[6];
        s[6] ^= s[7];

        s[6] ^= t;
        s[7] = s[7].rotate_left(21);

        result
    }
}

/// SplitMix64, used only to expand 64-bit seeds into generator states.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        mix64(self.state)
    }
}

/// The SplitMix64 output finalizer: a bijective avalanche mixer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const OS_BUFFER_WORDS: usize = 512;

/// Operating-system entropy, read in 4 KiB batches.
#[derive(Clone, PartialEq, Eq)]
pub struct OsEntropy {
    buf: Box<[u64; OS_BUFFER_WORDS]>,
    pos: usize,
}

impl fmt::Debug for OsEntropy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OsEntropy").field("pos", &self.pos).finish()
    }
}

impl OsEntropy {
    pub fn new() -> Self {
        Self {
            buf: Box::new([0; OS_BUFFER_WORDS]),
            pos: OS_BUFFER_WORDS,
        }
    }

    fn refill(&mut self) {
        let mut bytes = [0u8; OS_BUFFER_WORDS * 8];
        getrandom::fill(&mut bytes).expect("operating system entropy source failed");
        for (word, chunk) in self.buf.iter_mut().zip(bytes.chunks_exact(8)) {
            *word = u64::from_le_bytes(chunk.try_into().unwrap());
        }
        self.pos = 0;
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        if self.pos == OS_BUFFER_WORDS {
            self.refill();
        }
        let v = self.buf[self.pos];
        self.pos += 1;
        v
    }
}

impl Default for OsEntropy {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RngAlgorithm {
    #[default]
    #[serde(rename = "xoshiro512ss")]
    Xoshiro512StarStar,
    #[serde(rename = "os")]
    OsEntropy,
}

impl fmt::Display for RngAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RngAlgorithm::Xoshiro512StarStar => "xoshiro512ss",
            RngAlgorithm::OsEntropy => "os",
        })
    }
}

impl FromStr for RngAlgorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xoshiro512ss" | "xoshiro512starstar" | "xoshiro" => Ok(RngAlgorithm::Xoshiro512StarStar),
            "os" | "os-entropy" => Ok(RngAlgorithm::OsEntropy),
            other => Err(Error::config(format!(
                "unknown rng '{other}' (expected xoshiro512ss or os)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Source {
    Xoshiro(Xoshiro512StarStar),
    Os(OsEntropy),
}

/// Where a derived stream came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamOrigin {
    pub master_seed: u64,
    pub sample_index: u64,
}

/// A single-owner random stream with a bit-level read cursor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngStream {
    source: Source,
    bits: u64,
    avail: u32,
    origin: Option<StreamOrigin>,
}

/// Derives the xoshiro512** stream of one sample.
///
/// The sample index is avalanche-mixed before it is combined with the master
/// seed, so neighbouring `(seed, index)` pairs never alias.
pub fn derive_stream(master_seed: u64, sample_index: u64) -> RngStream {
    let mixed = master_seed ^ mix64(sample_index ^ 0x6a09_e667_f3bc_c908);
    let mut expander = SplitMix64::new(mixed);
    let mut state = [0u64; 8];
    for w in &mut state {
        *w = expander.next_u64();
    }
    RngStream {
        source: Source::Xoshiro(Xoshiro512StarStar::from_state(state)),
        bits: 0,
        avail: 0,
        origin: Some(StreamOrigin {
            master_seed,
            sample_index,
        }),
    }
}

impl RngStream {
    pub fn from_xoshiro(gen: Xoshiro512StarStar) -> Self {
        Self {
            source: Source::Xoshiro(gen),
            bits: 0,
            avail: 0,
            origin: None,
        }
    }

    pub fn os_entropy() -> Self {
        Self {
            source: Source::Os(OsEntropy::new()),
            bits: 0,
            avail: 0,
            origin: None,
        }
    }

    /// The stream for `sample_index` under `algorithm`. OS streams ignore
    /// the seed and are not reproducible.
    pub fn for_sample(algorithm: RngAlgorithm, master_seed: u64, sample_index: u64) -> Self {
        match algorithm {
            RngAlgorithm::Xoshiro512StarStar => derive_stream(master_seed, sample_index),
            RngAlgorithm::OsEntropy => Self::os_entropy(),
        }
    }

    /// Re-points an existing stream at another sample without reallocating
    /// the OS entropy buffer.
    pub fn reseed(&mut self, algorithm: RngAlgorithm, master_seed: u64, sample_index: u64) {
        match (algorithm, &mut self.source) {
            (RngAlgorithm::OsEntropy, Source::Os(_)) => {
                self.bits = 0;
                self.avail = 0;
            }
            _ => *self = Self::for_sample(algorithm, master_seed, sample_index),
        }
    }

    pub fn algorithm(&self) -> RngAlgorithm {
        match self.source {
            Source::Xoshiro(_) => RngAlgorithm::Xoshiro512StarStar,
            Source::Os(_) => RngAlgorithm::OsEntropy,
        }
    }

    pub fn origin(&self) -> Option<StreamOrigin> {
        self.origin
    }

    /// Next full 64-bit word. Bypasses (and does not disturb) the bit cursor.
    #[inline(always)]
    pub fn next_word(&mut self) -> u64 {
        match &mut self.source {
            Source::Xoshiro(g) => g.next_u64(),
            Source::Os(g) => g.next_u64(),
        }
    }

    /// Takes the next `k` bits (`1 <= k <= 64`), least significant first.
    #[inline(always)]
    pub fn take_bits(&mut self, k: u32) -> u64 {
        let source = &mut self.source;
        take_bits(&mut self.bits, &mut self.avail, k, || match source {
            Source::Xoshiro(g) => g.next_u64(),
            Source::Os(g) => g.next_u64(),
        })
    }

    /// Moves the generator and bit cursor out of a xoshiro stream so a hot
    /// loop can keep them in registers. Must be followed by [`Self::attach`].
    pub fn detach_xoshiro(&mut self) -> Option<XoshiroCursor> {
        match &self.source {
            Source::Xoshiro(g) => Some(XoshiroCursor {
                gen: g.clone(),
                bits: self.bits,
                avail: self.avail,
            }),
            Source::Os(_) => None,
        }
    }

    pub fn attach(&mut self, cursor: XoshiroCursor) {
        self.source = Source::Xoshiro(cursor.gen);
        self.bits = cursor.bits;
        self.avail = cursor.avail;
    }

    /// One value uniform over `{0, 1, 2}` by rejection of the 2-bit pattern 3.
    #[inline]
    pub fn take_ternary(&mut self) -> Time {
        loop {
            let v = self.take_bits(2);
            if v != 3 {
                return v as Time;
            }
        }
    }
}

/// A xoshiro generator with its bit cursor, see [`RngStream::detach_xoshiro`].
#[derive(Clone, Debug)]
pub struct XoshiroCursor {
    gen: Xoshiro512StarStar,
    bits: u64,
    avail: u32,
}

impl XoshiroCursor {
    #[inline(always)]
    pub fn take_bits(&mut self, k: u32) -> u64 {
        let gen = &mut self.gen;
        take_bits(&mut self.bits, &mut self.avail, k, || gen.next_u64())
    }

    /// Fills `out` with values uniform over `{0, 1, 2}`, consuming exactly
    /// the bits that repeated 2-bit draws with rejection of 3 would.
    pub fn fill_ternary(&mut self, out: &mut [Time]) {
        for chunk in out.chunks_mut(64) {
            let (lo, hi) = self.ternary_planes(chunk.len());
            for (j, o) in chunk.iter_mut().enumerate() {
                *o = (((lo >> j) & 1) | (((hi >> j) & 1) << 1)) as Time;
            }
        }
    }

    /// Draws `len <= 64` ternary values like [`Self::fill_ternary`] and
    /// returns them as bit planes: value `j` is `lo_j + 2·hi_j`.
    #[inline]
    pub fn ternary_planes(&mut self, len: usize) -> (u64, u64) {
        debug_assert!((1..=64).contains(&len));
        if self.avail.is_multiple_of(2) {
            #[cfg(target_arch = "x86_64")]
            if std::arch::is_x86_feature_detected!("bmi2") {
                // SAFETY: the required CPU feature was detected above.
                return unsafe { self.ternary_planes_bmi2(len) };
            }
        }
        let (mut lo, mut hi) = (0, 0);
        for j in 0..len {
            let v = loop {
                let v = self.take_bits(2);
                if v != 3 {
                    break v;
                }
            };
            lo |= (v & 1) << j;
            hi |= (v >> 1) << j;
        }
        (lo, hi)
    }

    /// Word-at-a-time variant: accepted pairs are gathered with `pext`.
    /// Needs an even number of buffered bits, so pairs never straddle words.
    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "bmi2,popcnt")]
    unsafe fn ternary_planes_bmi2(&mut self, len: usize) -> (u64, u64) {
        use std::arch::x86_64::{_pdep_u64, _pext_u64};
        const LOW: u64 = 0x5555_5555_5555_5555;
        let (mut bits, mut avail) = (self.bits, self.avail);
        let (mut lo, mut hi) = (0u64, 0u64);
        let mut got = 0;
        while got < len {
            if avail == 0 {
                bits = self.gen.next_u64();
                avail = 64;
            }
            let accepted = LOW & low_mask(avail) & !(bits & (bits >> 1));
            let count = accepted.count_ones() as usize;
            let need = len - got;
            let (mask, take, used) = if count < need {
                (accepted, count, avail)
            } else {
                let last = _pdep_u64(1 << (need - 1), accepted).trailing_zeros() + 2;
                (accepted & low_mask(last), need, last)
            };
            if take > 0 {
                lo |= _pext_u64(bits, mask) << got;
                hi |= _pext_u64(bits >> 1, mask) << got;
            }
            got += take;
            bits = if used == 64 { 0 } else { bits >> used };
            avail -= used;
        }
        self.bits = bits;
        self.avail = avail;
        (lo, hi)
    }
}

#[inline(always)]
fn take_bits(bits: &mut u64, avail: &mut u32, k: u32, next: impl FnOnce() -> u64) -> u64 {
    debug_assert!((1..=64).contains(&k));
    if k <= *avail {
        let out = *bits & low_mask(k);
        *bits = if k == 64 { 0 } else { *bits >> k };
        *avail -= k;
        out
    } else {
        let have = *avail;
        let need = k - have;
        let word = next();
        let out = *bits | ((word & low_mask(need)) << have);
        *bits = if need == 64 { 0 } else { word >> need };
        *avail = 64 - need;
        out
    }
}

#[inline(always)]
fn low_mask(k: u32) -> u64 {
    if k >= 64 {
        u64::MAX
    } else {
        (1u64 << k) - 1
    }
}

/// Draws one scaled wire delay. Deterministic models do not touch the stream
/// and return `None`; they assign delays per wire position instead.
pub fn next_delay(stream: &mut RngStream, model: &DelayModel) -> Option<Time> {
    match model {
        DelayModel::BinaryFairCoin => Some(stream.take_bits(1) as Time),
        DelayModel::TernaryUniform => Some(stream.take_ternary()),
        _ => None,
    }
}

impl rand_core::RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.next_word() as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.next_word()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_word().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// Parses a 64-bit seed given in decimal or `0x`-prefixed hexadecimal.
pub fn parse_seed(text: &str) -> Result<u64> {
    let t = text.trim();
    let parsed = match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(&hex.replace('_', ""), 16),
        None => t.replace('_', "").parse::<u64>(),
    };
    parsed.map_err(|_| Error::config(format!("invalid 64-bit seed '{text}'")))
}
