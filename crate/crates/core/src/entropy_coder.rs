//! Binary arithmetic coder plus the binarizations the scheme depends on.
//!
//! The engine is a 16-bit-range coder in the HEVC renormalization style:
//! regular bins carry an adaptive probability context, bypass bins are
//! equiprobable. A bypass bin costs exactly one payload bit and its coded
//! length never depends on context state, which is what makes bypass-coded
//! fields safe to encrypt without disturbing the rest of the stream.

use crate::error::{Error, Result};

/// Renormalization threshold; the coding range stays in `[HALF, 2*HALF)`.
const HALF: u32 = 1 << 15;
const TOP: u32 = 1 << 16;
/// Probability scale: P(1) is stored in units of 2^-15.
pub const PROB_ONE: u32 = 1 << 15;
/// Initial probability state, P(1) = 0.5.
pub const PROB_INIT: u16 = (PROB_ONE / 2) as u16;
/// Bits appended by `finish` beyond the per-bin payload.
pub const FLUSH_BITS: u64 = 16;

/// Upper bound on unary runs accepted by the decoder. Correct streams stay
/// far below this; hitting it means the payload is corrupt or truncated.
const MAX_UNARY: u32 = 1 << 22;

/// Coding contexts for regular bins.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ctx {
    SplitFlag,
    CuIsInter,
    IsMpm,
    MvdAbsGr0,
    MvdAbsGr1,
    SigFlag,
}

const NUM_CTX: usize = 6;

/// Adaptive probability state, one estimate of P(bin = 1) per context.
///
/// Encoder and decoder evolve identical state as long as they see the
/// same regular-bin sequence; bypass bins never touch it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContextState {
    probs: [u16; NUM_CTX],
}

impl Default for ContextState {
    fn default() -> Self {
        Self::new()
    }
}

impl ContextState {
    pub fn new() -> Self {
        ContextState {
            probs: [PROB_INIT; NUM_CTX],
        }
    }

    #[inline]
    fn prob(&self, ctx: Ctx) -> u16 {
        self.probs[ctx as usize]
    }

    /// p <- p + ((bin * 2^15 - p) >> 5)
    #[inline]
    fn adapt(&mut self, ctx: Ctx, bin: bool) {
        let p = self.probs[ctx as usize] as i32;
        let target = (bin as i32) << 15;
        self.probs[ctx as usize] = (p + ((target - p) >> 5)) as u16;
    }
}

/// How a single bin is coded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinMode {
    Regular(Ctx),
    Bypass,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bin {
    pub value: bool,
    pub mode: BinMode,
}

/// An ordered bin sequence with per-bin coding mode.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BinString(pub Vec<Bin>);

impl BinString {
    pub fn new() -> Self {
        BinString(Vec::new())
    }

    pub fn push_regular(&mut self, value: bool, ctx: Ctx) {
        self.0.push(Bin {
            value,
            mode: BinMode::Regular(ctx),
        });
    }

    pub fn push_bypass(&mut self, value: bool) {
        self.0.push(Bin {
            value,
            mode: BinMode::Bypass,
        });
    }

    pub fn push_bypass_bits(&mut self, bits: &[bool]) {
        for &b in bits {
            self.push_bypass(b);
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A syntax element awaiting binarization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyntaxElement {
    SplitFlag(bool),
    CuIsInter(bool),
    IsMpm(bool),
    /// Truncated unary, cMax = 5, bypass.
    MpmIndex(u8),
    /// Fixed length 6 bits, bypass.
    RemMode(u8),
    MvdAbsGr0(bool),
    MvdAbsGr1(bool),
    /// Golomb-Rice k = 1, bypass.
    MvdAbsMinus2(u32),
    MvdSign(bool),
    SigFlag(bool),
    /// Golomb-Rice k = 0, bypass.
    MagMinus1(u32),
    ResidualSignBit(bool),
}

/// Rice parameter used for `abs_mvd_minus_2`.
pub const MVD_RICE_K: u32 = 1;

impl SyntaxElement {
    /// Binarizes the element, tagging every bin with its coding mode.
    pub fn bins(&self) -> BinString {
        let mut out = BinString::new();
        match *self {
            SyntaxElement::SplitFlag(v) => out.push_regular(v, Ctx::SplitFlag),
            SyntaxElement::CuIsInter(v) => out.push_regular(v, Ctx::CuIsInter),
            SyntaxElement::IsMpm(v) => out.push_regular(v, Ctx::IsMpm),
            SyntaxElement::MpmIndex(v) => {
                let bits = binarize_truncated_unary(v as u32, 5).expect("mpm index in range");
                out.push_bypass_bits(&bits);
            }
            SyntaxElement::RemMode(v) => {
                let bits = binarize_fixed_length(v as u32, 6).expect("rem mode in range");
                out.push_bypass_bits(&bits);
            }
            SyntaxElement::MvdAbsGr0(v) => out.push_regular(v, Ctx::MvdAbsGr0),
            SyntaxElement::MvdAbsGr1(v) => out.push_regular(v, Ctx::MvdAbsGr1),
            SyntaxElement::MvdAbsMinus2(v) => {
                let (prefix, suffix) = binarize_golomb_rice(v, MVD_RICE_K);
                out.push_bypass_bits(&prefix);
                out.push_bypass_bits(&suffix);
            }
            SyntaxElement::MvdSign(v) => out.push_bypass(v),
            SyntaxElement::SigFlag(v) => out.push_regular(v, Ctx::SigFlag),
            SyntaxElement::MagMinus1(v) => {
                let (prefix, suffix) = binarize_golomb_rice(v, 0);
                out.push_bypass_bits(&prefix);
                out.push_bypass_bits(&suffix);
            }
            SyntaxElement::ResidualSignBit(v) => out.push_bypass(v),
        }
        out
    }
}

/// `v` ones followed by a zero, except `v == c_max` which drops the
/// terminator. Maximum length is `c_max` bits.
pub fn binarize_truncated_unary(v: u32, c_max: u32) -> Result<Vec<bool>> {
    if v > c_max {
        return Err(Error::ValueOutOfRange {
            value: v as u64,
            max: c_max as u64,
        });
    }
    let mut bits = vec![true; v as usize];
    if v < c_max {
        bits.push(false);
    }
    Ok(bits)
}

/// Big-endian fixed-length binarization over `n_bits` bits.
pub fn binarize_fixed_length(v: u32, n_bits: u32) -> Result<Vec<bool>> {
    debug_assert!((1..=32).contains(&n_bits));
    if n_bits < 32 && v >= (1u32 << n_bits) {
        return Err(Error::ValueOutOfRange {
            value: v as u64,
            max: ((1u64 << n_bits) - 1),
        });
    }
    Ok((0..n_bits).rev().map(|i| (v >> i) & 1 == 1).collect())
}

/// Golomb-Rice: unary prefix of `v >> k` and a `k`-bit remainder suffix.
/// The suffix is the fixed-length, encryptable portion.
pub fn binarize_golomb_rice(v: u32, k: u32) -> (Vec<bool>, Vec<bool>) {
    let q = v >> k;
    let mut prefix = vec![true; q as usize];
    prefix.push(false);
    let suffix = (0..k).rev().map(|i| (v >> i) & 1 == 1).collect();
    (prefix, suffix)
}

pub fn debinarize_truncated_unary(bits: &[bool], c_max: u32) -> Option<u32> {
    let mut v = 0u32;
    for (i, &b) in bits.iter().enumerate() {
        if !b {
            return if i == bits.len() - 1 { Some(v) } else { None };
        }
        v += 1;
    }
    if v == c_max && bits.len() as u32 == c_max {
        Some(v)
    } else {
        None
    }
}

pub fn debinarize_fixed_length(bits: &[bool]) -> u32 {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as u32)
}

/// Bit sink packing MSB-first into bytes.
#[derive(Default)]
struct BitSink {
    bytes: Vec<u8>,
    nbits: u64,
}

impl BitSink {
    fn push(&mut self, bit: bool) {
        let pos = (self.nbits % 8) as u8;
        if pos == 0 {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().unwrap() |= 1 << (7 - pos);
        }
        self.nbits += 1;
    }
}

struct BitSource<'a> {
    bytes: &'a [u8],
    pos: u64,
}

impl<'a> BitSource<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        BitSource { bytes, pos: 0 }
    }

    fn next(&mut self) -> Result<bool> {
        let byte = (self.pos / 8) as usize;
        if byte >= self.bytes.len() {
            return Err(Error::TruncatedStream);
        }
        let bit = (self.bytes[byte] >> (7 - (self.pos % 8))) & 1 == 1;
        self.pos += 1;
        Ok(bit)
    }
}

#[inline]
fn split_range(range: u32, p1: u16) -> u32 {
    // Interval mass assigned to bin == 1, clamped so neither side is empty.
    (((range as u64 * p1 as u64) >> 15) as u32).clamp(1, range - 1)
}

/// Arithmetic encoder. One instance codes one payload; contexts are owned
/// by the caller so they can be shared with the element writers.
pub struct BinEncoder {
    low: u32,
    range: u32,
    outstanding: u64,
    first_bit: bool,
    sink: BitSink,
}

impl Default for BinEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl BinEncoder {
    pub fn new() -> Self {
        BinEncoder {
            low: 0,
            range: TOP - 2,
            outstanding: 0,
            first_bit: true,
            sink: BitSink::default(),
        }
    }

    fn put(&mut self, bit: bool) {
        if self.first_bit {
            self.first_bit = false;
        } else {
            self.sink.push(bit);
        }
        while self.outstanding > 0 {
            self.sink.push(!bit);
            self.outstanding -= 1;
        }
    }

    fn renorm(&mut self) {
        while self.range < HALF {
            if self.low >= TOP {
                self.low -= TOP;
                self.put(true);
            } else if self.low < HALF {
                self.put(false);
            } else {
                self.low -= HALF;
                self.outstanding += 1;
            }
            self.low <<= 1;
            self.range <<= 1;
        }
    }

    pub fn encode_regular(&mut self, bin: bool, ctxs: &mut ContextState, ctx: Ctx) {
        let r1 = split_range(self.range, ctxs.prob(ctx));
        if bin {
            self.low += self.range - r1;
            self.range = r1;
        } else {
            self.range -= r1;
        }
        self.renorm();
        ctxs.adapt(ctx, bin);
    }

    /// Equiprobable bin: the range is untouched, exactly one payload bit
    /// is produced, and no probability state is read or written.
    pub fn encode_bypass(&mut self, bin: bool) {
        self.low <<= 1;
        if bin {
            self.low += self.range;
        }
        if self.low >= 2 * TOP {
            self.low -= 2 * TOP;
            self.put(true);
        } else if self.low < TOP {
            self.put(false);
        } else {
            self.low -= TOP;
            self.outstanding += 1;
        }
    }

    pub fn encode_bin(&mut self, bin: Bin, ctxs: &mut ContextState) {
        match bin.mode {
            BinMode::Regular(ctx) => self.encode_regular(bin.value, ctxs, ctx),
            BinMode::Bypass => self.encode_bypass(bin.value),
        }
    }

    pub fn encode_bins(&mut self, bins: &BinString, ctxs: &mut ContextState) {
        for &bin in &bins.0 {
            self.encode_bin(bin, ctxs);
        }
    }

    /// Payload bits committed so far, including carry-pending ones.
    /// Monotone non-decreasing as bins are added.
    pub fn pending_bit_count(&self) -> u64 {
        self.sink.nbits + self.outstanding
    }

    /// Flushes and returns the byte-aligned payload.
    pub fn finish(mut self) -> Vec<u8> {
        self.range = 2;
        self.renorm();
        self.put((self.low >> 16) & 1 == 1);
        // Two raw tail bits; the forced 1 keeps the final bits distinguishable
        // from byte padding.
        let tail = ((self.low >> 14) & 3) | 1;
        self.sink.push(tail & 2 != 0);
        self.sink.push(tail & 1 != 0);
        self.sink.bytes
    }
}

/// Exact payload size in bits of a finished byte-aligned payload.
pub fn bit_count(payload: &[u8]) -> u64 {
    payload.len() as u64 * 8
}

/// Arithmetic decoder over one payload.
pub struct BinDecoder<'a> {
    range: u32,
    offset: u32,
    source: BitSource<'a>,
}

impl<'a> BinDecoder<'a> {
    pub fn new(payload: &'a [u8]) -> Result<Self> {
        let mut source = BitSource::new(payload);
        let mut offset = 0u32;
        for _ in 0..16 {
            offset = (offset << 1) | source.next()? as u32;
        }
        Ok(BinDecoder {
            range: TOP - 2,
            offset,
            source,
        })
    }

    fn renorm(&mut self) -> Result<()> {
        while self.range < HALF {
            self.range <<= 1;
            self.offset = (self.offset << 1) | self.source.next()? as u32;
        }
        Ok(())
    }

    pub fn decode_regular(&mut self, ctxs: &mut ContextState, ctx: Ctx) -> Result<bool> {
        let r1 = split_range(self.range, ctxs.prob(ctx));
        let bin = if self.offset >= self.range - r1 {
            self.offset -= self.range - r1;
            self.range = r1;
            true
        } else {
            self.range -= r1;
            false
        };
        self.renorm()?;
        ctxs.adapt(ctx, bin);
        Ok(bin)
    }

    pub fn decode_bypass(&mut self) -> Result<bool> {
        self.offset = (self.offset << 1) | self.source.next()? as u32;
        if self.offset >= self.range {
            self.offset -= self.range;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    pub fn decode_truncated_unary(&mut self, c_max: u32) -> Result<u32> {
        let mut v = 0;
        while v < c_max {
            if !self.decode_bypass()? {
                break;
            }
            v += 1;
        }
        Ok(v)
    }

    pub fn decode_fixed_length(&mut self, n_bits: u32) -> Result<u32> {
        let mut v = 0;
        for _ in 0..n_bits {
            v = (v << 1) | self.decode_bypass()? as u32;
        }
        Ok(v)
    }

    pub fn decode_golomb_rice(&mut self, k: u32) -> Result<u32> {
        let mut q = 0u32;
        while self.decode_bypass()? {
            q += 1;
            if q > MAX_UNARY {
                return Err(Error::CorruptStream("unary prefix overrun".into()));
            }
        }
        let mut v = q << k;
        for i in (0..k).rev() {
            if self.decode_bypass()? {
                v |= 1 << i;
            }
        }
        Ok(v)
    }
}

/// Encode-side helpers mirroring the decoder's typed reads.
impl BinEncoder {
    pub fn encode_truncated_unary(&mut self, v: u32, c_max: u32) -> Result<()> {
        for bit in binarize_truncated_unary(v, c_max)? {
            self.encode_bypass(bit);
        }
        Ok(())
    }

    pub fn encode_fixed_length(&mut self, v: u32, n_bits: u32) -> Result<()> {
        for bit in binarize_fixed_length(v, n_bits)? {
            self.encode_bypass(bit);
        }
        Ok(())
    }

    pub fn encode_golomb_rice(&mut self, v: u32, k: u32) {
        let (prefix, suffix) = binarize_golomb_rice(v, k);
        for bit in prefix.into_iter().chain(suffix) {
            self.encode_bypass(bit);
        }
    }
}
