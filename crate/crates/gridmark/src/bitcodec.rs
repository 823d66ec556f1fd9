//! Bit-level primitives: fixed-width cell words, watermark bit strings,
//! XOR folding, and periodic bit extraction.
//!
//! Every numeric cell is carried as a `W`-bit unsigned word. Negative and
//! fractional sources are mapped losslessly: a decimal column with scale `d`
//! stores `value * 10^d` as a two's-complement integer in `W` bits. The two
//! low-order bits of every word belong to the watermark; all hashing works on
//! `masked()` words so embedding never perturbs what is being authenticated.

use crate::error::{Error, Result};

pub const MIN_WIDTH_BITS: u32 = 3;
pub const MAX_WIDTH_BITS: u32 = 64;
pub const DEFAULT_WIDTH_BITS: u32 = 32;

/// Numeric flavor of a column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Integer,
    Decimal,
}

/// Declared shape of one table column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    /// Decimal digits shifted into the integer representation; 0 for integers.
    pub scale: u32,
    /// Word width `W`; the two watermark bits plus at least one data bit.
    pub width_bits: u32,
}

impl ColumnSpec {
    pub fn integer(name: impl Into<String>) -> Self {
        ColumnSpec {
            name: name.into(),
            kind: ColumnKind::Integer,
            scale: 0,
            width_bits: DEFAULT_WIDTH_BITS,
        }
    }

    pub fn decimal(name: impl Into<String>, scale: u32) -> Self {
        ColumnSpec {
            name: name.into(),
            kind: ColumnKind::Decimal,
            scale,
            width_bits: DEFAULT_WIDTH_BITS,
        }
    }

    pub fn with_width_bits(mut self, width_bits: u32) -> Self {
        self.width_bits = width_bits;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Schema("column name must not be empty".into()));
        }
        if !(MIN_WIDTH_BITS..=MAX_WIDTH_BITS).contains(&self.width_bits) {
            return Err(Error::Schema(format!(
                "column {:?}: width_bits {} outside [{MIN_WIDTH_BITS}, {MAX_WIDTH_BITS}]",
                self.name, self.width_bits
            )));
        }
        if self.kind == ColumnKind::Integer && self.scale != 0 {
            return Err(Error::Schema(format!(
                "column {:?}: integer columns must have scale 0",
                self.name
            )));
        }
        Ok(())
    }
}

/// One cell as a `W`-bit unsigned word. Bits 0 and 1 carry the watermark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct CellWord(pub u64);

impl CellWord {
    /// The word with bits 0 and 1 cleared; the only view any hash ever sees.
    pub fn masked(self) -> u64 {
        self.0 & !0b11
    }

    /// `masked()` as a word.
    pub fn mask(self) -> CellWord {
        CellWord(self.masked())
    }

    /// Watermark bit at `position` (0 = attribute bit, 1 = tuple bit).
    pub fn bit(self, position: u32) -> u8 {
        debug_assert!(position < 2);
        ((self.0 >> position) & 1) as u8
    }

    /// Copy of the word with the addressed watermark bit overwritten.
    pub fn with_bit(self, position: u32, bit: u8) -> CellWord {
        debug_assert!(position < 2);
        debug_assert!(bit < 2);
        CellWord((self.0 & !(1 << position)) | (u64::from(bit) << position))
    }
}

fn width_mask(width_bits: u32) -> u64 {
    if width_bits >= 64 {
        u64::MAX
    } else {
        (1u64 << width_bits) - 1
    }
}

/// Signed window of representable scaled values for a width: `[-2^(W-1), 2^(W-1))`.
pub fn scaled_range(width_bits: u32) -> (i128, i128) {
    let half = 1i128 << (width_bits - 1);
    (-half, half)
}

/// Encode a scaled integer (`value * 10^scale`) into a `W`-bit word,
/// two's complement for negatives.
pub fn encode_scaled(scaled: i128, spec: &ColumnSpec) -> Result<CellWord> {
    let (lo, hi) = scaled_range(spec.width_bits);
    if scaled < lo || scaled >= hi {
        return Err(Error::Overflow {
            value: render_scaled(scaled, spec.scale),
            width_bits: spec.width_bits,
        });
    }
    Ok(CellWord((scaled as i64 as u64) & width_mask(spec.width_bits)))
}

/// Exact inverse of `encode_scaled`.
pub fn decode_scaled(word: CellWord, spec: &ColumnSpec) -> i64 {
    let w = spec.width_bits;
    debug_assert!(w == 64 || word.0 <= width_mask(w));
    if w < 64 && (word.0 >> (w - 1)) & 1 == 1 {
        (word.0 | !width_mask(w)) as i64
    } else {
        word.0 as i64
    }
}

/// Parse decimal text into the scaled integer `text * 10^scale`.
///
/// Rejects values with nonzero digits beyond `scale` fractional places.
pub fn parse_decimal_scaled(text: &str, scale: u32) -> Result<i128> {
    let trimmed = text.trim();
    let bad = || Error::InvalidNumber {
        text: text.to_string(),
    };
    if trimmed.is_empty() {
        return Err(bad());
    }
    let (negative, digits) = match trimmed.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, trimmed.strip_prefix('+').unwrap_or(trimmed)),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let scale = scale as usize;
    if frac_part.len() > scale && frac_part.as_bytes()[scale..].iter().any(|&b| b != b'0') {
        return Err(Error::NonIntegral {
            value: trimmed.to_string(),
            scale: scale as u32,
        });
    }
    let mut scaled: i128 = 0;
    let overflow = || Error::Overflow {
        value: trimmed.to_string(),
        width_bits: MAX_WIDTH_BITS,
    };
    for b in int_part.bytes() {
        scaled = scaled
            .checked_mul(10)
            .and_then(|v| v.checked_add(i128::from(b - b'0')))
            .ok_or_else(overflow)?;
    }
    for i in 0..scale {
        let digit = frac_part.as_bytes().get(i).map_or(0, |b| b - b'0');
        scaled = scaled
            .checked_mul(10)
            .and_then(|v| v.checked_add(i128::from(digit)))
            .ok_or_else(overflow)?;
    }
    Ok(if negative { -scaled } else { scaled })
}

/// Render a scaled integer as canonical decimal text with exactly `scale`
/// fractional digits (none for `scale == 0`).
pub fn render_scaled(scaled: i128, scale: u32) -> String {
    if scale == 0 {
        return scaled.to_string();
    }
    let negative = scaled < 0;
    let magnitude = scaled.unsigned_abs().to_string();
    let scale = scale as usize;
    let padded = if magnitude.len() <= scale {
        format!("{}{}", "0".repeat(scale + 1 - magnitude.len()), magnitude)
    } else {
        magnitude
    };
    let split = padded.len() - scale;
    let sign = if negative { "-" } else { "" };
    format!("{sign}{}.{}", &padded[..split], &padded[split..])
}

/// Encode decimal text into a cell word per the column spec.
pub fn encode_cell(text: &str, spec: &ColumnSpec) -> Result<CellWord> {
    encode_scaled(parse_decimal_scaled(text, spec.scale)?, spec)
}

/// Render a cell word as canonical decimal text. Exact inverse of `encode_cell`
/// on canonical text.
pub fn decode_cell(word: CellWord, spec: &ColumnSpec) -> String {
    render_scaled(i128::from(decode_scaled(word, spec)), spec.scale)
}

/// A fixed-length bit string, most-significant bit first.
///
/// Watermarks, key material, and digests all travel as `BitString`s. The
/// numeric value of a string is its MSB-first reading; `from_word` and
/// `to_word` convert between strings and words so XOR algebra on strings
/// matches XOR algebra on the underlying values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitString {
    /// Little-endian numeric limbs: limb 0 holds numeric bits 0..64.
    limbs: Vec<u64>,
    len: usize,
}

impl BitString {
    pub fn zeros(len: usize) -> Self {
        assert!(len >= 1, "bit strings are non-empty");
        BitString {
            limbs: vec![0; len.div_ceil(64)],
            len,
        }
    }

    /// The `len`-bit string whose numeric value is `value`.
    pub fn from_word(value: u64, len: usize) -> Self {
        let mut out = Self::zeros(len);
        if len < 64 {
            assert!(value < (1u64 << len), "value wider than the bit string");
        }
        out.limbs[0] = value;
        out
    }

    /// All bits of `bytes`, most-significant bit of `bytes[0]` first.
    pub fn from_bytes(bytes: &[u8]) -> Self {
        let len = bytes.len() * 8;
        let mut out = Self::zeros(len);
        for (i, &byte) in bytes.iter().enumerate() {
            for b in 0..8 {
                out.set_bit(i * 8 + b, (byte >> (7 - b)) & 1);
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Bit at string position `index`, counting from the most significant end.
    pub fn bit(&self, index: usize) -> u8 {
        assert!(index < self.len);
        let pos = self.len - 1 - index;
        ((self.limbs[pos / 64] >> (pos % 64)) & 1) as u8
    }

    pub fn set_bit(&mut self, index: usize, bit: u8) {
        assert!(index < self.len);
        debug_assert!(bit < 2);
        let pos = self.len - 1 - index;
        let limb = &mut self.limbs[pos / 64];
        *limb = (*limb & !(1 << (pos % 64))) | (u64::from(bit) << (pos % 64));
    }

    /// Bitwise XOR with an equal-length string.
    pub fn xor_assign(&mut self, other: &BitString) {
        assert_eq!(self.len, other.len, "xor of unequal bit strings");
        for (a, b) in self.limbs.iter_mut().zip(&other.limbs) {
            *a ^= b;
        }
    }

    /// XOR `value` into the numeric low bits.
    pub fn xor_word(&mut self, value: u64) {
        if self.len < 64 {
            assert!(value < (1u64 << self.len), "value wider than the bit string");
        }
        self.limbs[0] ^= value;
    }

    /// Numeric value, when it fits in 64 bits.
    pub fn to_word(&self) -> Option<u64> {
        if self.limbs[1..].iter().any(|&l| l != 0) {
            None
        } else {
            Some(self.limbs[0])
        }
    }

    /// Number of positions at which two equal-length strings differ.
    pub fn diff_bits(&self, other: &BitString) -> u32 {
        assert_eq!(self.len, other.len);
        self.limbs
            .iter()
            .zip(&other.limbs)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }

    /// Number of set bits.
    pub fn count_ones(&self) -> u32 {
        self.limbs.iter().map(|l| l.count_ones()).sum()
    }
}

/// XOR of consecutive `width`-bit chunks of `word`, least-significant chunk
/// first. Words narrower than `width` pass through unchanged, which keeps the
/// fold invertible exactly when values fit the watermark width.
pub fn fold_word(word: u64, width: usize) -> u64 {
    assert!(width >= 1);
    if width >= 64 {
        return word;
    }
    let chunk_mask = (1u64 << width) - 1;
    let mut acc = 0;
    let mut rest = word;
    while rest != 0 {
        acc ^= rest & chunk_mask;
        rest >>= width;
    }
    acc
}

/// `fold_word` as a `width`-bit string.
pub fn fold(word: u64, width: usize) -> BitString {
    BitString::from_word(fold_word(word, width), width)
}

/// The `length`-bit string read from `source` front-first, repeating the
/// source periodically when it is shorter than `length`.
pub fn extract_bits(source: &BitString, length: usize) -> BitString {
    let mut out = BitString::zeros(length);
    for i in 0..length {
        out.set_bit(i, source.bit(i % source.len()));
    }
    out
}
