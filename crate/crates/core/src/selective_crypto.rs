//! Format-compliant selective encryption: a counter-mode keystream plus a
//! range-constrained XOR applied to chosen syntax elements before
//! binarization (encoder side) and after de-binarization (decoder side).
//!
//! Every transform is its own inverse under the same (key, nonce, unit
//! context), and every transformed value stays inside its syntactic
//! range, so a stream decodes on any decoder whether or not the key is
//! known. The per-unit counter block is rebuilt independently on both
//! sides from position data alone; no extra synchronization state rides
//! in the stream.

use aes::cipher::{BlockEncrypt, KeyInit};
use aes::Aes128;

use crate::entropy_coder::MVD_RICE_K;
use crate::error::{Error, Result};
use crate::inter_predictor::MvdSyntax;
use crate::intra_predictor::IpmSyntax;
use crate::residual_coder::SignPattern;

/// Syntax element classes that may be enciphered.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ElementClass {
    LumaIpm,
    MvdValue,
    MvdSign,
    ResidualSign,
}

impl ElementClass {
    pub const ALL: [ElementClass; 4] = [
        ElementClass::LumaIpm,
        ElementClass::MvdValue,
        ElementClass::MvdSign,
        ElementClass::ResidualSign,
    ];

    /// Bit position in the container's `enc_flags` byte.
    pub fn bit(self) -> u8 {
        match self {
            ElementClass::LumaIpm => 0,
            ElementClass::MvdValue => 1,
            ElementClass::MvdSign => 2,
            ElementClass::ResidualSign => 3,
        }
    }

    /// Element tag inside the counter block (4-bit field).
    pub fn tag(self) -> u8 {
        match self {
            ElementClass::LumaIpm => 1,
            ElementClass::MvdValue => 2,
            ElementClass::MvdSign => 3,
            ElementClass::ResidualSign => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ElementClass::LumaIpm => "luma_ipm",
            ElementClass::MvdValue => "mvd_value",
            ElementClass::MvdSign => "mvd_sign",
            ElementClass::ResidualSign => "residual_sign",
        }
    }

    /// CLI token, as accepted by `--encrypt`.
    pub fn token(self) -> &'static str {
        match self {
            ElementClass::LumaIpm => "ipm",
            ElementClass::MvdValue => "mvdv",
            ElementClass::MvdSign => "mvds",
            ElementClass::ResidualSign => "rsign",
        }
    }
}

/// Set of enabled element classes, stored as the container flag byte.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ClassSet(u8);

impl ClassSet {
    pub const EMPTY: ClassSet = ClassSet(0);

    pub fn all() -> Self {
        let mut s = ClassSet(0);
        for c in ElementClass::ALL {
            s.insert(c);
        }
        s
    }

    pub fn from_bits(bits: u8) -> Result<Self> {
        if bits & !0b1111 != 0 {
            return Err(Error::CorruptStream(format!(
                "unknown encryption flag bits {bits:#04x}"
            )));
        }
        Ok(ClassSet(bits))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn insert(&mut self, class: ElementClass) {
        self.0 |= 1 << class.bit();
    }

    pub fn contains(self, class: ElementClass) -> bool {
        self.0 & (1 << class.bit()) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = ElementClass> {
        ElementClass::ALL.into_iter().filter(move |c| self.contains(*c))
    }

    /// Parses a comma-separated list of CLI tokens; empty means none.
    pub fn parse(list: &str) -> Result<Self> {
        let mut set = ClassSet::EMPTY;
        for token in list.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let class = ElementClass::ALL
                .into_iter()
                .find(|c| c.token() == token)
                .ok_or_else(|| {
                    Error::InvalidConfig(format!(
                        "unknown encryption class '{token}' (expected ipm,mvdv,mvds,rsign)"
                    ))
                })?;
            set.insert(class);
        }
        Ok(set)
    }
}

/// Which element classes are enciphered plus the public stream salt.
/// The key itself lives in the [`Keystream`], never in the stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncryptionConfig {
    pub classes: ClassSet,
    pub nonce: u64,
}

impl EncryptionConfig {
    pub fn plain() -> Self {
        EncryptionConfig {
            classes: ClassSet::EMPTY,
            nonce: 0,
        }
    }
}

/// Per-unit counter identity, derivable identically by encoder and
/// decoder at the corresponding syntax position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct UnitContext {
    pub frame_index: u32,
    /// Coding-unit origin in pixels.
    pub x: u32,
    pub y: u32,
    pub element_tag: u8,
    /// Per-(CU, tag) occurrence counter. Values above 255 spill into the
    /// frame field's unused high bits (see `derive_counter_block`).
    pub ordinal: u32,
}

/// Field widths: nonce(64) | frame(24) | x(14) | y(14) | tag(4) | ordinal(8).
pub const MAX_COORD: u32 = (1 << 14) - 1;
pub const MAX_FRAMES_ENCRYPTED: u32 = 1 << 16;

/// Builds the 128-bit counter block:
/// nonce(64) || frame_index(24) || x(14) || y(14) || element_tag(4) || ordinal(8),
/// big-endian. Injective over the supported parameter ranges; ordinal
/// overflow beyond 8 bits is folded into the frame field's high bits,
/// which stay unused while `frame_index < 2^16`.
pub fn derive_counter_block(nonce: u64, ctx: &UnitContext) -> [u8; 16] {
    debug_assert!(ctx.x <= MAX_COORD && ctx.y <= MAX_COORD);
    debug_assert!(ctx.element_tag < 16);
    debug_assert!(ctx.frame_index < MAX_FRAMES_ENCRYPTED || ctx.ordinal < 256);
    let spill = ctx.ordinal >> 8;
    let frame_field = (ctx.frame_index | (spill << 16)) & 0xFF_FFFF;
    let tail: u64 = ((frame_field as u64) << 40)
        | ((ctx.x as u64) << 26)
        | ((ctx.y as u64) << 12)
        | (((ctx.element_tag & 0xF) as u64) << 8)
        | (ctx.ordinal & 0xFF) as u64;
    let mut block = [0u8; 16];
    block[..8].copy_from_slice(&nonce.to_be_bytes());
    block[8..].copy_from_slice(&tail.to_be_bytes());
    block
}

/// Block transform behind the keystream; AES-128 in production, stubs in
/// tests.
pub trait KeystreamCipher: Send + Sync {
    fn encrypt_block(&self, block: [u8; 16]) -> [u8; 16];
}

struct Aes128Cipher(Aes128);

impl KeystreamCipher for Aes128Cipher {
    fn encrypt_block(&self, block: [u8; 16]) -> [u8; 16] {
        let mut b = aes::cipher::generic_array::GenericArray::from(block);
        self.0.encrypt_block(&mut b);
        b.into()
    }
}

/// Always-zero blocks: every XOR becomes the identity.
struct ZeroCipher;

impl KeystreamCipher for ZeroCipher {
    fn encrypt_block(&self, _block: [u8; 16]) -> [u8; 16] {
        [0u8; 16]
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Deterministic seeded stub for tests; not a cipher.
struct StubCipher {
    seed: u64,
}

impl KeystreamCipher for StubCipher {
    fn encrypt_block(&self, block: [u8; 16]) -> [u8; 16] {
        let hi = u64::from_be_bytes(block[..8].try_into().unwrap());
        let lo = u64::from_be_bytes(block[8..].try_into().unwrap());
        let mut state = self.seed ^ hi.rotate_left(17) ^ lo;
        let a = splitmix64(&mut state);
        let b = splitmix64(&mut state);
        let mut out = [0u8; 16];
        out[..8].copy_from_slice(&a.to_be_bytes());
        out[8..].copy_from_slice(&b.to_be_bytes());
        out
    }
}

/// Pluggable keystream generator.
pub struct Keystream {
    cipher: Box<dyn KeystreamCipher>,
}

impl Keystream {
    /// Production default: AES-128 over the derived counter blocks.
    pub fn aes128(key: [u8; 16]) -> Self {
        Keystream {
            cipher: Box::new(Aes128Cipher(Aes128::new(&key.into()))),
        }
    }

    pub fn from_hex_key(hex: &str) -> Result<Self> {
        Ok(Keystream::aes128(parse_hex_key(hex)?))
    }

    /// Test stub whose blocks are all zero.
    pub fn zero() -> Self {
        Keystream {
            cipher: Box::new(ZeroCipher),
        }
    }

    /// Deterministic seeded test stub.
    pub fn stub(seed: u64) -> Self {
        Keystream {
            cipher: Box::new(StubCipher { seed }),
        }
    }

    pub fn cipher(&self) -> &dyn KeystreamCipher {
        self.cipher.as_ref()
    }
}

/// Parses a 32-hex-character key.
pub fn parse_hex_key(hex: &str) -> Result<[u8; 16]> {
    let hex = hex.trim();
    if hex.len() != 32 || !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(Error::InvalidKey);
    }
    let mut key = [0u8; 16];
    for (i, chunk) in hex.as_bytes().chunks(2).enumerate() {
        let s = std::str::from_utf8(chunk).unwrap();
        key[i] = u8::from_str_radix(s, 16).unwrap();
    }
    Ok(key)
}

/// The low-order ("last") `n` bits of the enciphered counter block.
pub fn keystream_bits(
    cipher: &dyn KeystreamCipher,
    nonce: u64,
    ctx: &UnitContext,
    n: u32,
) -> u64 {
    debug_assert!((1..=64).contains(&n));
    let block = cipher.encrypt_block(derive_counter_block(nonce, ctx));
    let low = u64::from_be_bytes(block[8..].try_into().unwrap());
    if n == 64 {
        low
    } else {
        low & ((1u64 << n) - 1)
    }
}

/// Chunk width for a value bounded by `max`: ceil(log2(max + 1)).
pub fn chunk_width(max: u32) -> u32 {
    debug_assert!(max >= 1);
    32 - max.leading_zeros()
}

/// XOR constrained to `[0, max]`: returns `v ^ chunk` when that stays in
/// range, otherwise `v` unchanged. Self-inverse under a fixed chunk.
pub fn ranged_xor(v: u32, max: u32, chunk: u64) -> Result<u32> {
    if v > max {
        return Err(Error::ValueOutOfRange {
            value: v as u64,
            max: max as u64,
        });
    }
    let mask = (1u64 << chunk_width(max)) - 1;
    let flipped = v ^ (chunk & mask) as u32;
    Ok(if flipped <= max { flipped } else { v })
}

/// Applies the enabled element transforms. Stateless: every operation is
/// a pure function of (cipher, nonce, unit context), so the same calls
/// decrypt on the decoder side.
pub struct Encryptor<'a> {
    cipher: &'a dyn KeystreamCipher,
    nonce: u64,
    classes: ClassSet,
}

pub const MPM_INDEX_MAX: u32 = 5;
pub const REM_MODE_MAX: u32 = 60;

impl<'a> Encryptor<'a> {
    pub fn new(cipher: &'a dyn KeystreamCipher, nonce: u64, classes: ClassSet) -> Self {
        Encryptor {
            cipher,
            nonce,
            classes,
        }
    }

    pub fn classes(&self) -> ClassSet {
        self.classes
    }

    fn chunk(&self, ctx: &UnitContext, n: u32) -> u64 {
        keystream_bits(self.cipher, self.nonce, ctx, n)
    }

    /// Enciphers the luma IPM index: the MPM position over [0, 5] with a
    /// 3-bit chunk or the remaining-mode rank over [0, 60] with a 6-bit
    /// chunk. The MPM/remaining flag itself is regular-coded and never
    /// touched.
    pub fn encrypt_ipm(&self, syntax: IpmSyntax, ctx: &UnitContext) -> IpmSyntax {
        if !self.classes.contains(ElementClass::LumaIpm) {
            return syntax;
        }
        match syntax {
            IpmSyntax::Mpm { index } => {
                let chunk = self.chunk(ctx, chunk_width(MPM_INDEX_MAX));
                let index = ranged_xor(index as u32, MPM_INDEX_MAX, chunk)
                    .expect("mpm index in range") as u8;
                IpmSyntax::Mpm { index }
            }
            IpmSyntax::Remaining { rem } => {
                let chunk = self.chunk(ctx, chunk_width(REM_MODE_MAX));
                let rem =
                    ranged_xor(rem as u32, REM_MODE_MAX, chunk).expect("rem mode in range") as u8;
                IpmSyntax::Remaining { rem }
            }
        }
    }

    /// Enciphers one MVD component: the Golomb-Rice suffix of
    /// `abs_mvd_minus_2` (length-preserving, prefix untouched) and the
    /// sign bit. The greater-than flags are regular-coded and never
    /// touched.
    pub fn encrypt_mvd(
        &self,
        syntax: MvdSyntax,
        value_ctx: &UnitContext,
        sign_ctx: &UnitContext,
    ) -> MvdSyntax {
        let mut out = syntax;
        if self.classes.contains(ElementClass::MvdValue) {
            if let MvdSyntax::AtLeastTwo {
                abs_minus_2,
                negative,
            } = out
            {
                let mask = (1u32 << MVD_RICE_K) - 1;
                let chunk = self.chunk(value_ctx, MVD_RICE_K) as u32;
                out = MvdSyntax::AtLeastTwo {
                    abs_minus_2: (abs_minus_2 & !mask) | ((abs_minus_2 ^ chunk) & mask),
                    negative,
                };
            }
        }
        if self.classes.contains(ElementClass::MvdSign) {
            let flip = self.chunk(sign_ctx, 1) & 1 == 1;
            out = match out {
                MvdSyntax::Zero => MvdSyntax::Zero,
                MvdSyntax::Unit { negative } => MvdSyntax::Unit {
                    negative: negative ^ flip,
                },
                MvdSyntax::AtLeastTwo {
                    abs_minus_2,
                    negative,
                } => MvdSyntax::AtLeastTwo {
                    abs_minus_2,
                    negative: negative ^ flip,
                },
            };
        }
        out
    }

    /// Enciphers a residual sign pattern bitwise; chunks beyond 64 bits
    /// advance the ordinal. Length is unchanged.
    pub fn encrypt_sign_pattern(&self, pattern: &SignPattern, ctx: &UnitContext) -> SignPattern {
        if !self.classes.contains(ElementClass::ResidualSign) || pattern.is_empty() {
            return pattern.clone();
        }
        let mut bits = pattern.bits.clone();
        for (chunk_idx, window) in bits.chunks_mut(64).enumerate() {
            let chunk_ctx = UnitContext {
                ordinal: ctx.ordinal + chunk_idx as u32,
                ..*ctx
            };
            let chunk = self.chunk(&chunk_ctx, window.len() as u32);
            for (t, bit) in window.iter_mut().enumerate() {
                *bit ^= (chunk >> t) & 1 == 1;
            }
        }
        SignPattern { bits }
    }

    /// Keystream chunks consumed by a sign pattern of the given length.
    pub fn sign_pattern_chunks(len: usize) -> u32 {
        (len as u32).div_ceil(64)
    }
}
