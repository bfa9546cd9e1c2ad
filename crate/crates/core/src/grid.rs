//! The TRIX grid restricted to a finite dependency cone.
//!
//! Node `(x, H)` can only be influenced by nodes `(x', y)` with
//! `|x' - x| <= H - y`, so observing the top nodes `x = 0..=δ` of an
//! infinitely wide grid only requires the cone whose layer `y` spans
//! `x ∈ [-(H - y), δ + (H - y)]`. Evaluating that cone is exact.
//!
//! Times are stored as integers in scaled units: a model with resolution `r`
//! draws delays in steps of `1 / r`.
//!
//! Wire delays are requested layer by layer. Within a layer nodes are grouped
//! into blocks of 64 consecutive `x`; each block requests the wires from
//! in-neighbour offset `-1`, then `0`, then `+1`, each for the block's nodes
//! in ascending `x`. This order is part of the reproducibility contract
//! (see [`crate::DRAW_ORDER`]).

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rng::{RngStream, StreamOrigin, XoshiroCursor};

/// A pulse time or wire delay in scaled units.
pub type Time = u16;

/// Nodes per wire-request block.
pub const BLOCK: usize = 64;

/// Second-largest of three values.
#[inline(always)]
pub fn median3(a: Time, b: Time, c: Time) -> Time {
    a.min(b).max(a.max(b).min(c))
}

/// Per-wire delay distribution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DelayModel {
    /// Delays 0 or 1, each with probability 1/2.
    BinaryFairCoin,
    /// Delays 0, 1/2 or 1 (scaled 0, 1, 2), each with probability 1/3.
    TernaryUniform,
    /// Wires into nodes with `x >= boundary` get delay 1, all others 0.
    Split { boundary: i64 },
    /// Every wire gets the same scaled delay.
    Constant { delay: Time },
    /// Explicit delays in draw order.
    Table { delays: Arc<[Time]>, resolution: u32 },
}

impl DelayModel {
    pub fn resolution(&self) -> u32 {
        match self {
            DelayModel::TernaryUniform => 2,
            DelayModel::Table { resolution, .. } => *resolution,
            _ => 1,
        }
    }

    /// Largest scaled delay the model can assign.
    pub fn max_delay(&self) -> Time {
        match self {
            DelayModel::BinaryFairCoin | DelayModel::Split { .. } => 1,
            DelayModel::TernaryUniform => 2,
            DelayModel::Constant { delay } => *delay,
            DelayModel::Table { delays, .. } => delays.iter().copied().max().unwrap_or(0),
        }
    }

    /// Scaled values a wire can take.
    pub fn support(&self) -> Vec<Time> {
        match self {
            DelayModel::BinaryFairCoin | DelayModel::Split { .. } => vec![0, 1],
            DelayModel::TernaryUniform => vec![0, 1, 2],
            DelayModel::Constant { delay } => vec![*delay],
            DelayModel::Table { delays, .. } => {
                let mut v = delays.to_vec();
                v.sort_unstable();
                v.dedup();
                v
            }
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self, DelayModel::BinaryFairCoin | DelayModel::TernaryUniform)
    }

    /// Whether every delay this model assigns is 0 or 1 at resolution 1.
    pub fn is_binary_valued(&self) -> bool {
        self.resolution() == 1 && self.max_delay() <= 1
    }
}

impl fmt::Display for DelayModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DelayModel::BinaryFairCoin => f.write_str("binary"),
            DelayModel::TernaryUniform => f.write_str("ternary"),
            DelayModel::Split { boundary } => write!(f, "split:{boundary}"),
            DelayModel::Constant { delay } => write!(f, "const:{delay}"),
            DelayModel::Table { delays, resolution } => {
                write!(f, "table:{}@{}", delays.len(), resolution)
            }
        }
    }
}

impl FromStr for DelayModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || {
            Error::config(format!(
                "unknown delay model '{s}' (expected binary, ternary, split:<x*> or const:<w>)"
            ))
        };
        match s {
            "binary" | "binary-fair-coin" => Ok(DelayModel::BinaryFairCoin),
            "ternary" | "ternary-uniform" => Ok(DelayModel::TernaryUniform),
            "split" => Ok(DelayModel::Split { boundary: 1 }),
            _ => {
                if let Some(v) = s.strip_prefix("split:") {
                    let boundary = v.parse().map_err(|_| bad())?;
                    Ok(DelayModel::Split { boundary })
                } else if let Some(v) = s.strip_prefix("const:") {
                    let delay = v.parse().map_err(|_| bad())?;
                    Ok(DelayModel::Constant { delay })
                } else {
                    Err(bad())
                }
            }
        }
    }
}

impl Serialize for DelayModel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DelayModel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// The observed top nodes `(0..=span, height)` and their dependency cone.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConeSpec {
    pub height: u32,
    pub span: u32,
}

impl ConeSpec {
    pub fn new(height: u32, span: u32) -> Self {
        Self { height, span }
    }

    /// Number of cone nodes on layer `y`.
    #[inline]
    pub fn layer_width(&self, y: u32) -> usize {
        debug_assert!(y <= self.height);
        2 * (self.height - y) as usize + 1 + self.span as usize
    }

    /// Leftmost `x` of the cone on layer `y`.
    #[inline]
    pub fn layer_start(&self, y: u32) -> i64 {
        -((self.height - y) as i64)
    }

    /// Nodes above layer 0, i.e. the number of median evaluations per sample.
    pub fn node_count(&self) -> u64 {
        let h = self.height as u64;
        h * h + h * self.span as u64
    }

    pub fn wire_count(&self) -> u64 {
        3 * self.node_count()
    }

    /// Position in draw order of the wire from `(x + offset, y - 1)` to `(x, y)`.
    pub fn wire_index(&self, y: u32, x: i64, offset: i8) -> Option<usize> {
        if y == 0 || y > self.height || !(-1..=1).contains(&offset) {
            return None;
        }
        let w = self.layer_width(y);
        let i = usize::try_from(x - self.layer_start(y)).ok()?;
        if i >= w {
            return None;
        }
        let below: usize = (1..y).map(|l| 3 * self.layer_width(l)).sum();
        let block = i / BLOCK;
        let in_block = (w - block * BLOCK).min(BLOCK);
        Some(below + 3 * BLOCK * block + (offset + 1) as usize * in_block + i % BLOCK)
    }

    /// Checks that every time in the cone fits the scaled time type and that
    /// table models cover every wire.
    pub fn validate(&self, model: &DelayModel) -> Result<()> {
        let worst = self.height as u64 * model.max_delay() as u64;
        if worst > Time::MAX as u64 {
            return Err(Error::config(format!(
                "height {} with maximum delay {} overflows the {}-bit time type",
                self.height,
                model.max_delay(),
                Time::BITS
            )));
        }
        if let DelayModel::Table { delays, resolution } = model {
            if *resolution == 0 {
                return Err(Error::config("table model needs a positive resolution"));
            }
            if delays.len() as u64 != self.wire_count() {
                return Err(Error::config(format!(
                    "table model has {} delays but the cone has {} wires",
                    delays.len(),
                    self.wire_count()
                )));
            }
        }
        Ok(())
    }
}

/// One block of wires requested by the simulator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WireBlock {
    pub layer: u32,
    /// `x` of the first node in the block.
    pub x0: i64,
    /// In-neighbour offset `c ∈ {-1, 0, +1}`.
    pub offset: i8,
}

/// Supplies wire delays in draw order.
pub trait WireSource {
    /// Fills `out` with the delays of the wires into nodes `x0, x0 + 1, ...`
    /// of `block.layer` from in-neighbour offset `block.offset`.
    /// `out.len()` never exceeds [`BLOCK`].
    fn fill(&mut self, block: WireBlock, out: &mut [Time]);

    /// True for sources whose delays are always 0 or 1 and which implement
    /// [`WireSource::fill_bits`].
    const PACKED: bool = false;

    /// The block's delays packed as bits, bit `j` for node `x0 + j`. Must
    /// agree with [`WireSource::fill`].
    #[inline(always)]
    fn fill_bits(&mut self, block: WireBlock, len: usize) -> u64 {
        let mut out = [0; BLOCK];
        self.fill(block, &mut out[..len]);
        out[..len]
            .iter()
            .enumerate()
            .fold(0, |acc, (j, &d)| acc | ((d as u64 & 1) << j))
    }

    /// True for sources whose delays are always 0, 1 or 2 and which
    /// implement [`WireSource::fill_planes`].
    const PLANES: bool = false;

    /// The block's delays as two bit planes `(lo, hi)`: the delay of node
    /// `x0 + j` is `lo_j + 2·hi_j`. Must agree with [`WireSource::fill`].
    #[inline(always)]
    fn fill_planes(&mut self, block: WireBlock, len: usize) -> (u64, u64) {
        let mut out = [0; BLOCK];
        self.fill(block, &mut out[..len]);
        out[..len].iter().enumerate().fold((0, 0), |(lo, hi), (j, &d)| {
            (lo | ((d as u64 & 1) << j), hi | (((d as u64 >> 1) & 1) << j))
        })
    }
}

impl<W: WireSource> WireSource for &mut W {
    const PACKED: bool = W::PACKED;
    const PLANES: bool = W::PLANES;

    #[inline(always)]
    fn fill(&mut self, block: WireBlock, out: &mut [Time]) {
        (**self).fill(block, out)
    }

    #[inline(always)]
    fn fill_bits(&mut self, block: WireBlock, len: usize) -> u64 {
        (**self).fill_bits(block, len)
    }

    #[inline(always)]
    fn fill_planes(&mut self, block: WireBlock, len: usize) -> (u64, u64) {
        (**self).fill_planes(block, len)
    }
}

/// Writes bit `j` of `bits` into `out[j]`.
#[inline(always)]
pub fn expand_bits(bits: u64, out: &mut [Time]) {
    for (j, o) in out.iter_mut().enumerate() {
        *o = ((bits >> j) & 1) as Time;
    }
}

/// Fair coin flips read from a stream's bit cursor.
pub struct BinaryDraws<'a>(pub &'a mut RngStream);

impl WireSource for BinaryDraws<'_> {
    const PACKED: bool = true;

    #[inline(always)]
    fn fill(&mut self, _: WireBlock, out: &mut [Time]) {
        let bits = self.0.take_bits(out.len() as u32);
        expand_bits(bits, out);
    }

    #[inline(always)]
    fn fill_bits(&mut self, _: WireBlock, len: usize) -> u64 {
        self.0.take_bits(len as u32)
    }
}

/// Fair coin flips from a detached xoshiro cursor.
pub struct FastBinaryDraws<'a>(pub &'a mut XoshiroCursor);

impl WireSource for FastBinaryDraws<'_> {
    const PACKED: bool = true;

    #[inline(always)]
    fn fill(&mut self, _: WireBlock, out: &mut [Time]) {
        let bits = self.0.take_bits(out.len() as u32);
        expand_bits(bits, out);
    }

    #[inline(always)]
    fn fill_bits(&mut self, _: WireBlock, len: usize) -> u64 {
        self.0.take_bits(len as u32)
    }
}

/// Uniform `{0, 1, 2}` delays read from a stream's bit cursor.
pub struct TernaryDraws<'a>(pub &'a mut RngStream);

impl WireSource for TernaryDraws<'_> {
    #[inline]
    fn fill(&mut self, _: WireBlock, out: &mut [Time]) {
        for o in out {
            *o = self.0.take_ternary();
        }
    }
}

/// Uniform `{0, 1, 2}` delays from a detached xoshiro cursor.
pub struct FastTernaryDraws<'a>(pub &'a mut XoshiroCursor);

impl WireSource for FastTernaryDraws<'_> {
    const PLANES: bool = true;

    #[inline(always)]
    fn fill(&mut self, _: WireBlock, out: &mut [Time]) {
        self.0.fill_ternary(out);
    }

    #[inline(always)]
    fn fill_planes(&mut self, _: WireBlock, len: usize) -> (u64, u64) {
        self.0.ternary_planes(len)
    }
}

pub struct ConstantDelays(pub Time);

impl WireSource for ConstantDelays {
    #[inline]
    fn fill(&mut self, _: WireBlock, out: &mut [Time]) {
        out.fill(self.0);
    }
}

/// Slow wires into `x >= boundary`, fast wires elsewhere.
pub struct SplitDelays {
    pub boundary: i64,
}

impl WireSource for SplitDelays {
    fn fill(&mut self, block: WireBlock, out: &mut [Time]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = (block.x0 + j as i64 >= self.boundary) as Time;
        }
    }
}

/// Delays replayed from a slice in draw order.
pub struct TableDelays<'a> {
    delays: &'a [Time],
    pos: usize,
}

impl<'a> TableDelays<'a> {
    pub fn new(delays: &'a [Time]) -> Self {
        Self { delays, pos: 0 }
    }
}

impl WireSource for TableDelays<'_> {
    #[inline]
    fn fill(&mut self, _: WireBlock, out: &mut [Time]) {
        out.copy_from_slice(&self.delays[self.pos..self.pos + out.len()]);
        self.pos += out.len();
    }
}

/// The binary digits of an integer, least significant first. Enumerating
/// all integers below `2^wires` enumerates every binary assignment.
pub struct IndexBits {
    bits: u64,
}

impl IndexBits {
    pub fn new(assignment: u64) -> Self {
        Self { bits: assignment }
    }
}

impl WireSource for IndexBits {
    const PACKED: bool = true;

    #[inline(always)]
    fn fill(&mut self, block: WireBlock, out: &mut [Time]) {
        expand_bits(self.fill_bits(block, out.len()), out);
    }

    #[inline(always)]
    fn fill_bits(&mut self, _: WireBlock, len: usize) -> u64 {
        let out = self.bits & low_bits(len);
        self.bits = self.bits.checked_shr(len as u32).unwrap_or(0);
        out
    }
}

#[inline(always)]
fn low_bits(len: usize) -> u64 {
    if len >= 64 {
        u64::MAX
    } else {
        (1 << len) - 1
    }
}

/// Records every delay handed out by the wrapped source.
pub struct Recorder<W> {
    pub inner: W,
    pub log: Vec<Time>,
}

impl<W: WireSource> WireSource for Recorder<W> {
    fn fill(&mut self, block: WireBlock, out: &mut [Time]) {
        self.inner.fill(block, out);
        self.log.extend_from_slice(out);
    }
}

/// Reusable buffers for evaluating cones. Memory is O(cone width).
#[derive(Clone, Debug, Default)]
pub struct Simulator {
    prev: Vec<Time>,
    next: Vec<Time>,
    wires: [Vec<Time>; 3],
    masks: Vec<[u64; 3]>,
    high: Vec<[u64; 3]>,
}

#[inline(always)]
fn median_layer(prev: &[Time], wires: &[Vec<Time>; 3], out: &mut [Time]) {
    let w = out.len();
    let (p0, p1, p2) = (&prev[..w], &prev[1..w + 1], &prev[2..w + 2]);
    let (a, b, c) = (&wires[0][..w], &wires[1][..w], &wires[2][..w]);
    for i in 0..w {
        out[i] = median3(
            p0[i].wrapping_add(a[i]),
            p1[i].wrapping_add(b[i]),
            p2[i].wrapping_add(c[i]),
        );
    }
}

mod kernel {
    use super::{median3, Time, BLOCK};

    /// One layer update where wire delays are given as bit masks, one
    /// `[c = -1, c = 0, c = +1]` triple per block of [`BLOCK`] nodes.
    #[inline]
    pub fn median_layer_bits(prev: &[Time], masks: &[[u64; 3]], out: &mut [Time]) {
        assert!(prev.len() >= out.len() + 2 && masks.len() * BLOCK >= out.len());
        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("avx512bw") {
            // SAFETY: the required CPU features were detected at runtime.
            unsafe { avx512::median_layer_bits(prev, masks, out) };
            return;
        }
        portable(prev, masks, out);
    }

    /// Like [`median_layer_bits`] with a second plane of masks whose set
    /// bits add 2.
    #[inline]
    pub fn median_layer_planes(prev: &[Time], lo: &[[u64; 3]], hi: &[[u64; 3]], out: &mut [Time]) {
        assert!(prev.len() >= out.len() + 2 && lo.len() * BLOCK >= out.len() && hi.len() == lo.len());
        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("avx512bw") {
            // SAFETY: the required CPU features were detected at runtime.
            unsafe { avx512::median_layer_planes(prev, lo, hi, out) };
            return;
        }
        portable_planes(prev, lo, hi, out);
    }

    #[inline(always)]
    fn portable_planes(prev: &[Time], lo: &[[u64; 3]], hi: &[[u64; 3]], out: &mut [Time]) {
        for (b, chunk) in out.chunks_mut(BLOCK).enumerate() {
            let (l, h) = (lo[b], hi[b]);
            let d = |c: usize, i: usize| (((l[c] >> i) & 1) + 2 * ((h[c] >> i) & 1)) as Time;
            let p = &prev[b * BLOCK..];
            for (i, o) in chunk.iter_mut().enumerate() {
                *o = median3(p[i] + d(0, i), p[i + 1] + d(1, i), p[i + 2] + d(2, i));
            }
        }
    }

    #[inline(always)]
    fn portable(prev: &[Time], masks: &[[u64; 3]], out: &mut [Time]) {
        for (b, chunk) in out.chunks_mut(BLOCK).enumerate() {
            let [m0, m1, m2] = masks[b];
            let p = &prev[b * BLOCK..];
            for (i, o) in chunk.iter_mut().enumerate() {
                *o = median3(
                    p[i] + ((m0 >> i) & 1) as Time,
                    p[i + 1] + ((m1 >> i) & 1) as Time,
                    p[i + 2] + ((m2 >> i) & 1) as Time,
                );
            }
        }
    }

    #[cfg(target_arch = "x86_64")]
    mod avx512 {
        use std::arch::x86_64::*;

        use super::{Time, BLOCK};

        #[target_feature(enable = "avx512f,avx512bw")]
        pub unsafe fn median_layer_bits(prev: &[Time], masks: &[[u64; 3]], out: &mut [Time]) {
            let one = _mm512_set1_epi16(1);
            let w = out.len();
            let src = prev.as_ptr();
            let dst = out.as_mut_ptr();
            let mut i = 0;
            while i < w {
                let lanes = (w - i).min(32);
                let live: __mmask32 = if lanes == 32 { !0 } else { (1 << lanes) - 1 };
                let shift = i % BLOCK;
                let [m0, m1, m2] = masks[i / BLOCK].map(|m| (m >> shift) as u32);
                let p0 = _mm512_maskz_loadu_epi16(live, src.add(i) as *const i16);
                let p1 = _mm512_maskz_loadu_epi16(live, src.add(i + 1) as *const i16);
                let p2 = _mm512_maskz_loadu_epi16(live, src.add(i + 2) as *const i16);
                let a = _mm512_mask_add_epi16(p0, m0, p0, one);
                let b = _mm512_mask_add_epi16(p1, m1, p1, one);
                let c = _mm512_mask_add_epi16(p2, m2, p2, one);
                let lo = _mm512_min_epu16(a, b);
                let hi = _mm512_max_epu16(a, b);
                let med = _mm512_max_epu16(lo, _mm512_min_epu16(hi, c));
                _mm512_mask_storeu_epi16(dst.add(i) as *mut i16, live, med);
                i += 32;
            }
        }

        #[target_feature(enable = "avx512f,avx512bw")]
        pub unsafe fn median_layer_planes(prev: &[Time], lo: &[[u64; 3]], hi: &[[u64; 3]], out: &mut [Time]) {
            let one = _mm512_set1_epi16(1);
            let two = _mm512_set1_epi16(2);
            let w = out.len();
            let src = prev.as_ptr();
            let dst = out.as_mut_ptr();
            let mut i = 0;
            while i < w {
                let lanes = (w - i).min(32);
                let live: __mmask32 = if lanes == 32 { !0 } else { (1 << lanes) - 1 };
                let shift = i % BLOCK;
                let l = lo[i / BLOCK].map(|m| (m >> shift) as u32);
                let h = hi[i / BLOCK].map(|m| (m >> shift) as u32);
                let p0 = _mm512_maskz_loadu_epi16(live, src.add(i) as *const i16);
                let p1 = _mm512_maskz_loadu_epi16(live, src.add(i + 1) as *const i16);
                let p2 = _mm512_maskz_loadu_epi16(live, src.add(i + 2) as *const i16);
                let a = _mm512_mask_add_epi16(p0, l[0], p0, one);
                let b = _mm512_mask_add_epi16(p1, l[1], p1, one);
                let c = _mm512_mask_add_epi16(p2, l[2], p2, one);
                let a = _mm512_mask_add_epi16(a, h[0], a, two);
                let b = _mm512_mask_add_epi16(b, h[1], b, two);
                let c = _mm512_mask_add_epi16(c, h[2], c, two);
                let lo = _mm512_min_epu16(a, b);
                let hi = _mm512_max_epu16(a, b);
                let med = _mm512_max_epu16(lo, _mm512_min_epu16(hi, c));
                _mm512_mask_storeu_epi16(dst.add(i) as *mut i16, live, med);
                i += 32;
            }
        }
    }

    #[cfg(test)]
    mod tests {
        use super::*;

        #[test]
        fn dispatch_matches_portable() {
            let mut state = 0x1234_5678_9abc_def0u64;
            let mut next = || {
                state = crate::rng::mix64(state.wrapping_add(0x9e37_79b9_7f4a_7c15));
                state
            };
            for w in [1usize, 5, 31, 32, 33, 63, 64, 65, 100, 130, 257] {
                let prev: Vec<Time> = (0..w + 2).map(|_| (next() % 40) as Time).collect();
                let masks: Vec<[u64; 3]> =
                    (0..w.div_ceil(BLOCK)).map(|_| [next(), next(), next()]).collect();
                let mut a = vec![0; w];
                let mut b = vec![0; w];
                median_layer_bits(&prev, &masks, &mut a);
                portable(&prev, &masks, &mut b);
                assert_eq!(a, b, "width {w}");
                let high: Vec<[u64; 3]> =
                    masks.iter().map(|m| m.map(|x| next() & !x)).collect();
                median_layer_planes(&prev, &masks, &high, &mut a);
                portable_planes(&prev, &masks, &high, &mut b);
                assert_eq!(a, b, "planes, width {w}");
            }
        }
    }
}

impl Simulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Evaluates the cone layer by layer and returns the top-layer times of
    /// `x = 0..=span`. When `layers` is given, every layer (starting with
    /// layer 0) is appended to it.
    ///
    /// The caller must have validated `cone` against the source's model.
    pub fn run<W: WireSource>(
        &mut self,
        cone: &ConeSpec,
        mut source: W,
        mut layers: Option<&mut Vec<Vec<Time>>>,
    ) -> &[Time] {
        let base = cone.layer_width(0);
        self.prev.clear();
        self.prev.resize(base, 0);
        self.next.resize(base, 0);
        for w in &mut self.wires {
            w.resize(base, 0);
        }
        if let Some(l) = layers.as_deref_mut() {
            l.push(self.prev.clone());
        }

        for y in 1..=cone.height {
            let width = cone.layer_width(y);
            let x_start = cone.layer_start(y);
            if W::PACKED {
                self.masks.clear();
                for b in (0..width).step_by(BLOCK) {
                    let m = (width - b).min(BLOCK);
                    let x0 = x_start + b as i64;
                    self.masks.push([-1i8, 0, 1].map(|offset| {
                        source.fill_bits(WireBlock { layer: y, x0, offset }, m)
                    }));
                }
                kernel::median_layer_bits(&self.prev, &self.masks, &mut self.next[..width]);
            } else if W::PLANES {
                self.masks.clear();
                self.high.clear();
                for b in (0..width).step_by(BLOCK) {
                    let m = (width - b).min(BLOCK);
                    let x0 = x_start + b as i64;
                    let mut lo = [0; 3];
                    let mut hi = [0; 3];
                    for (c, offset) in [-1i8, 0, 1].into_iter().enumerate() {
                        (lo[c], hi[c]) = source.fill_planes(WireBlock { layer: y, x0, offset }, m);
                    }
                    self.masks.push(lo);
                    self.high.push(hi);
                }
                kernel::median_layer_planes(&self.prev, &self.masks, &self.high, &mut self.next[..width]);
            } else {
                let mut b = 0;
                while b < width {
                    let m = (width - b).min(BLOCK);
                    for (c, wires) in self.wires.iter_mut().enumerate() {
                        let block = WireBlock {
                            layer: y,
                            x0: x_start + b as i64,
                            offset: c as i8 - 1,
                        };
                        source.fill(block, &mut wires[b..b + m]);
                    }
                    b += m;
                }
                median_layer(&self.prev, &self.wires, &mut self.next[..width]);
            }
            std::mem::swap(&mut self.prev, &mut self.next);
            if let Some(l) = layers.as_deref_mut() {
                l.push(self.prev[..width].to_vec());
            }
        }
        &self.prev[..cone.span as usize + 1]
    }

    /// Evaluates one sample of `model`, drawing from `stream` when the model
    /// is stochastic.
    pub fn run_model(
        &mut self,
        cone: &ConeSpec,
        model: &DelayModel,
        stream: &mut RngStream,
    ) -> &[Time] {
        match model {
            DelayModel::BinaryFairCoin => match stream.detach_xoshiro() {
                Some(mut cursor) => {
                    self.run(cone, FastBinaryDraws(&mut cursor), None);
                    stream.attach(cursor);
                    &self.prev[..cone.span as usize + 1]
                }
                None => self.run(cone, BinaryDraws(stream), None),
            },
            DelayModel::TernaryUniform => match stream.detach_xoshiro() {
                Some(mut cursor) => {
                    self.run(cone, FastTernaryDraws(&mut cursor), None);
                    stream.attach(cursor);
                    &self.prev[..cone.span as usize + 1]
                }
                None => self.run(cone, TernaryDraws(stream), None),
            },
            DelayModel::Split { boundary } => {
                self.run(cone, SplitDelays { boundary: *boundary }, None)
            }
            DelayModel::Constant { delay } => self.run(cone, ConstantDelays(*delay), None),
            DelayModel::Table { delays, .. } => self.run(cone, TableDelays::new(delays), None),
        }
    }

    fn run_recorded(
        &mut self,
        cone: &ConeSpec,
        model: &DelayModel,
        stream: &mut RngStream,
        layers: &mut Vec<Vec<Time>>,
    ) -> (Vec<Time>, Vec<Time>) {
        fn go<W: WireSource>(
            sim: &mut Simulator,
            cone: &ConeSpec,
            inner: W,
            layers: &mut Vec<Vec<Time>>,
        ) -> (Vec<Time>, Vec<Time>) {
            let mut rec = Recorder {
                inner,
                log: Vec::with_capacity(cone.wire_count() as usize),
            };
            let top = sim.run(cone, &mut rec, Some(layers)).to_vec();
            (top, rec.log)
        }
        match model {
            DelayModel::BinaryFairCoin => go(self, cone, BinaryDraws(stream), layers),
            DelayModel::TernaryUniform => go(self, cone, TernaryDraws(stream), layers),
            DelayModel::Split { boundary } => go(
                self,
                cone,
                SplitDelays {
                    boundary: *boundary,
                },
                layers,
            ),
            DelayModel::Constant { delay } => go(self, cone, ConstantDelays(*delay), layers),
            DelayModel::Table { delays, .. } => go(self, cone, TableDelays::new(delays), layers),
        }
    }
}

/// One evaluated sample of the grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridSample {
    pub spec: ConeSpec,
    pub model: DelayModel,
    /// Times of the top nodes `x = 0..=span`.
    pub top: Vec<Time>,
    /// Every cone layer, starting with layer 0 (diagnostic mode only).
    pub layers: Option<Vec<Vec<Time>>>,
    /// Every wire delay in draw order (diagnostic mode only).
    pub delays: Option<Vec<Time>>,
    pub origin: Option<StreamOrigin>,
}

impl GridSample {
    /// `d(x, H)` for an observed top node.
    pub fn top_time(&self, x: u32) -> Option<Time> {
        self.top.get(x as usize).copied()
    }

    /// `d(x, y)` for any cone node, when layers were recorded.
    pub fn time(&self, x: i64, y: u32) -> Option<Time> {
        let layers = self.layers.as_ref()?;
        let row = layers.get(y as usize)?;
        let i = usize::try_from(x - self.spec.layer_start(y)).ok()?;
        row.get(i).copied()
    }

    pub fn resolution(&self) -> u32 {
        self.model.resolution()
    }
}

/// Simulates one sample. `record_grid` additionally keeps every layer and
/// every wire delay, which [`complement_sample`] needs.
pub fn simulate_sample(
    spec: ConeSpec,
    model: &DelayModel,
    stream: &mut RngStream,
    record_grid: bool,
) -> Result<GridSample> {
    spec.validate(model)?;
    let mut sim = Simulator::new();
    let origin = model.is_stochastic().then(|| stream.origin()).flatten();
    if record_grid {
        let mut layers = Vec::with_capacity(spec.height as usize + 1);
        let (top, delays) = sim.run_recorded(&spec, model, stream, &mut layers);
        Ok(GridSample {
            spec,
            model: model.clone(),
            top,
            layers: Some(layers),
            delays: Some(delays),
            origin,
        })
    } else {
        let top = sim.run_model(&spec, model, stream).to_vec();
        Ok(GridSample {
            spec,
            model: model.clone(),
            top,
            layers: None,
            delays: None,
            origin,
        })
    }
}

/// Re-evaluates a recorded sample with every wire delay `w` replaced by
/// `1 - w`. Every node time `t` on layer `y` becomes `y - t`.
pub fn complement_sample(sample: &GridSample) -> Result<GridSample> {
    let delays = sample.delays.as_ref().ok_or_else(|| {
        Error::argument("complement needs a sample recorded with wire delays (diagnostic mode)")
    })?;
    if !sample.model.is_binary_valued() || delays.iter().any(|&w| w > 1) {
        return Err(Error::argument(format!(
            "complement is only defined for 0/1 wire delays, not model {}",
            sample.model
        )));
    }
    let flipped: Vec<Time> = delays.iter().map(|&w| 1 - w).collect();
    let mut sim = Simulator::new();
    let mut layers = Vec::with_capacity(sample.spec.height as usize + 1);
    let top = sim
        .run(&sample.spec, TableDelays::new(&flipped), Some(&mut layers))
        .to_vec();
    Ok(GridSample {
        spec: sample.spec,
        model: sample.model.clone(),
        top,
        layers: Some(layers),
        delays: Some(flipped),
        origin: None,
    })
}

/// `d(δ, H) - d(0, H)` in scaled units.
pub fn extract_skew(sample: &GridSample, delta: u32) -> Result<i64> {
    if delta > sample.spec.span {
        return Err(Error::config(format!(
            "skew at distance {delta} lies outside the simulated cone (span {})",
            sample.spec.span
        )));
    }
    Ok(sample.top[delta as usize] as i64 - sample.top[0] as i64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    #[test]
    fn median_examples() {
        assert_eq!(median3(0, 1, 1), 1);
        assert_eq!(median3(5, 5, 5), 5);
        assert_eq!(median3(3, 7, 4), 4);
    }

    #[test]
    fn median_is_the_middle_of_sorted_values() {
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    let mut v = [a, b, c];
                    v.sort_unstable();
                    assert_eq!(median3(a, b, c), v[1]);
                }
            }
        }
    }

    #[test]
    fn cone_geometry() {
        let cone = ConeSpec::new(3, 2);
        assert_eq!(cone.layer_width(0), 9);
        assert_eq!(cone.layer_width(3), 3);
        assert_eq!(cone.layer_start(1), -2);
        assert_eq!(cone.node_count(), 7 + 5 + 3);
        // H=3 delay cone: 27 wires
        assert_eq!(ConeSpec::new(3, 0).wire_count(), 27);
        assert_eq!(ConeSpec::new(3, 1).wire_count(), 36);
    }

    #[test]
    fn wire_indices_are_a_permutation() {
        for cone in [ConeSpec::new(3, 1), ConeSpec::new(40, 30)] {
            let mut seen = vec![false; cone.wire_count() as usize];
            for y in 1..=cone.height {
                let x0 = cone.layer_start(y);
                for i in 0..cone.layer_width(y) as i64 {
                    for c in -1..=1 {
                        let k = cone.wire_index(y, x0 + i, c).unwrap();
                        assert!(!seen[k]);
                        seen[k] = true;
                    }
                }
            }
            assert!(seen.iter().all(|&s| s));
        }
    }

    #[test]
    fn all_zero_delays() {
        let mut s = derive_stream(0, 0);
        let g = simulate_sample(ConeSpec::new(3, 0), &DelayModel::Constant { delay: 0 }, &mut s, false)
            .unwrap();
        assert_eq!(g.top, vec![0]);
    }

    #[test]
    fn split_reaches_full_skew() {
        let mut s = derive_stream(0, 0);
        let g = simulate_sample(ConeSpec::new(4, 1), &DelayModel::Split { boundary: 1 }, &mut s, false)
            .unwrap();
        assert_eq!(g.top, vec![0, 4]);
        assert_eq!(extract_skew(&g, 1).unwrap(), 4);
    }

    #[test]
    fn one_layer_takes_the_median_of_drawn_delays() {
        let model = DelayModel::Table {
            delays: Arc::from(vec![0, 1, 1]),
            resolution: 1,
        };
        let mut s = derive_stream(0, 0);
        let g = simulate_sample(ConeSpec::new(1, 0), &model, &mut s, false).unwrap();
        assert_eq!(g.top, vec![1]);
    }

    #[test]
    fn constant_delays_are_translation_invariant() {
        let mut s = derive_stream(0, 0);
        let g = simulate_sample(ConeSpec::new(9, 5), &DelayModel::Constant { delay: 1 }, &mut s, true)
            .unwrap();
        for (y, row) in g.layers.as_ref().unwrap().iter().enumerate() {
            assert!(row.iter().all(|&t| t as usize == y));
        }
        for d in 0..=5 {
            assert_eq!(extract_skew(&g, d).unwrap(), 0);
        }
    }

    #[test]
    fn skew_outside_cone_is_rejected() {
        let mut s = derive_stream(0, 0);
        let g = simulate_sample(ConeSpec::new(2, 1), &DelayModel::BinaryFairCoin, &mut s, false)
            .unwrap();
        assert!(matches!(extract_skew(&g, 2), Err(Error::Config(_))));
    }

    #[test]
    fn height_zero_observes_the_source() {
        let mut s = derive_stream(0, 0);
        let g = simulate_sample(ConeSpec::new(0, 3), &DelayModel::BinaryFairCoin, &mut s, false)
            .unwrap();
        assert_eq!(g.top, vec![0; 4]);
    }

    #[test]
    fn complement_requires_recorded_binary_delays() {
        let mut s = derive_stream(0, 0);
        let plain = simulate_sample(ConeSpec::new(3, 0), &DelayModel::BinaryFairCoin, &mut s, false)
            .unwrap();
        assert!(complement_sample(&plain).is_err());
        let ternary = simulate_sample(ConeSpec::new(3, 0), &DelayModel::TernaryUniform, &mut s, true)
            .unwrap();
        assert!(complement_sample(&ternary).is_err());
    }

    #[test]
    fn complement_of_all_zero_sample() {
        let mut s = derive_stream(0, 0);
        let g = simulate_sample(ConeSpec::new(3, 0), &DelayModel::Constant { delay: 0 }, &mut s, true)
            .unwrap();
        let f = complement_sample(&g).unwrap();
        for (y, row) in f.layers.as_ref().unwrap().iter().enumerate() {
            assert!(row.iter().all(|&t| t as usize == y));
        }
    }

    #[test]
    fn complement_flips_the_worst_case_skew() {
        let mut s = derive_stream(0, 0);
        let g = simulate_sample(ConeSpec::new(4, 1), &DelayModel::Split { boundary: 1 }, &mut s, true)
            .unwrap();
        let f = complement_sample(&g).unwrap();
        assert_eq!(extract_skew(&f, 1).unwrap(), -4);
    }

    #[test]
    fn table_length_must_match_cone() {
        let model = DelayModel::Table {
            delays: Arc::from(vec![0; 5]),
            resolution: 1,
        };
        assert!(ConeSpec::new(1, 0).validate(&model).is_err());
    }

    #[test]
    fn oversized_cones_are_rejected() {
        assert!(ConeSpec::new(40_000, 0)
            .validate(&DelayModel::TernaryUniform)
            .is_err());
        assert!(ConeSpec::new(40_000, 0)
            .validate(&DelayModel::BinaryFairCoin)
            .is_ok());
    }

    #[test]
    fn model_names_round_trip() {
        for text in ["binary", "ternary", "split:1", "split:-3", "const:0", "const:2"] {
            let m: DelayModel = text.parse().unwrap();
            assert_eq!(m.to_string(), text);
        }
        assert!("gaussian".parse::<DelayModel>().is_err());
        assert!("split:x".parse::<DelayModel>().is_err());
    }

    #[test]
    fn index_bits_expand_lsb_first() {
        let mut out = [9; 5];
        let mut src = IndexBits::new(0b10110);
        let block = WireBlock {
            layer: 1,
            x0: 0,
            offset: 0,
        };
        src.fill(block, &mut out[..3]);
        assert_eq!(out[..3], [0, 1, 1]);
        src.fill(block, &mut out[..2]);
        assert_eq!(out[..2], [0, 1]);
    }
}
