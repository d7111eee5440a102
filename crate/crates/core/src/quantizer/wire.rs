//! Bit-exact serialization of [`QuantizedUpdate`].
//!
//! A message is one MSB-first bit stream with two sections, zero-padded to
//! a byte boundary:
//!
//! ```text
//! side-info (simulator bookkeeping)        air payload (counted in payload_bits)
//! ┌─────┬────────────┬────────┬──────┬───────────┬──────────────┬───────────┬────────────────┐
//! │ d   │ high_count │ anchor │ b    │ high mask │ high signs   │ radius    │ low signs      │ high levels ...
//! │ u32 │ u32        │ f32    │ u8   │ d bits    │ d̄ bits       │ f32       │ d - d̄ bits     │ d̄ × b bits
//! └─────┴────────────┴────────┴──────┴───────────┴──────────────┴───────────┴────────────────┘
//! ```
//!
//! The air section is exactly `32 + (d - d̄) + d̄·b` bits, i.e. the
//! update's `payload_bits`. Element positions, high-element signs and the
//! anchor value travel in the side-info section. Low signs use `1` for
//! positive and `0` for non-positive.

use super::mixed::{grid_intervals, mixed_payload_bits, ElementClass, HighCode, MAX_CODE_BITS};
use super::{BitReader, BitWriter, QuantError, QuantizedUpdate};

/// Fixed side-info header: d, high_count, anchor and code width.
pub const SIDE_HEADER_BITS: usize = 32 + 32 + 32 + 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireImage {
    pub bytes: Vec<u8>,
    pub side_info_bits: usize,
    pub air_bits: usize,
}

impl WireImage {
    pub fn total_bits(&self) -> usize {
        self.side_info_bits + self.air_bits
    }
}

pub fn to_wire(update: &QuantizedUpdate) -> WireImage {
    let mut w = BitWriter::new();
    w.push_bits(update.dim as u64, 32);
    w.push_bits(update.high_count as u64, 32);
    w.push_bits(u64::from((update.anchor as f32).to_bits()), 32);
    w.push_bits(u64::from(update.bits), 8);
    for class in &update.classes {
        w.push_bit(*class == ElementClass::High);
    }
    for code in &update.high_codes {
        w.push_bit(code.negative);
    }
    let side_info_bits = w.len();

    w.push_bits(u64::from((update.grid_radius as f32).to_bits()), 32);
    for class in &update.classes {
        match class {
            ElementClass::LowPos => w.push_bit(true),
            ElementClass::LowNeg => w.push_bit(false),
            ElementClass::High => {}
        }
    }
    for code in &update.high_codes {
        w.push_bits(code.level, update.bits);
    }
    let air_bits = w.len() - side_info_bits;
    WireImage {
        bytes: w.finish(),
        side_info_bits,
        air_bits,
    }
}

pub fn to_bytes(update: &QuantizedUpdate) -> Vec<u8> {
    to_wire(update).bytes
}

/// Parses a serialized update. Anchor and radius come back at 32-bit
/// precision. Rejects truncated input, trailing data, inconsistent counts
/// and non-canonical padding.
pub fn from_bytes(bytes: &[u8]) -> Result<QuantizedUpdate, QuantError> {
    let malformed = |msg: &str| QuantError::MalformedPayload(msg.to_string());
    let mut r = BitReader::new(bytes);
    let truncated = || malformed("truncated payload");

    let dim = r.read_bits(32).ok_or_else(truncated)? as usize;
    let high_count = r.read_bits(32).ok_or_else(truncated)? as usize;
    let anchor = f32::from_bits(r.read_bits(32).ok_or_else(truncated)? as u32);
    let bits = r.read_bits(8).ok_or_else(truncated)? as u32;

    if dim == 0 {
        return Err(malformed("zero dimension"));
    }
    if high_count > dim {
        return Err(malformed("high_count exceeds dimension"));
    }
    if !(2..=MAX_CODE_BITS).contains(&bits) {
        return Err(malformed("unsupported code width"));
    }
    // Check the full length before allocating anything proportional to d.
    let expected = SIDE_HEADER_BITS as u64
        + dim as u64
        + high_count as u64
        + mixed_payload_bits(dim, high_count, bits);
    if expected.div_ceil(8) != bytes.len() as u64 {
        return Err(malformed("length does not match header"));
    }

    let mut is_high = Vec::with_capacity(dim);
    for _ in 0..dim {
        is_high.push(r.read_bit().ok_or_else(truncated)?);
    }
    if is_high.iter().filter(|&&h| h).count() != high_count {
        return Err(malformed("high mask disagrees with high_count"));
    }
    let mut negative = Vec::with_capacity(high_count);
    for _ in 0..high_count {
        negative.push(r.read_bit().ok_or_else(truncated)?);
    }

    let grid_radius = f32::from_bits(r.read_bits(32).ok_or_else(truncated)? as u32);
    if !(anchor.is_finite() && anchor >= 0.0 && grid_radius.is_finite() && grid_radius >= 0.0) {
        return Err(malformed("anchor and grid radius must be finite and non-negative"));
    }
    if high_count == 0 && (anchor != 0.0 || grid_radius != 0.0) {
        return Err(malformed("degenerate update with a grid"));
    }

    let mut classes = Vec::with_capacity(dim);
    for &h in &is_high {
        classes.push(if h {
            ElementClass::High
        } else if r.read_bit().ok_or_else(truncated)? {
            ElementClass::LowPos
        } else {
            ElementClass::LowNeg
        });
    }
    let intervals = grid_intervals(bits);
    let mut high_codes = Vec::with_capacity(high_count);
    for &neg in &negative {
        let level = r.read_bits(bits).ok_or_else(truncated)?;
        debug_assert!(level <= intervals);
        high_codes.push(HighCode {
            level,
            negative: neg,
        });
    }
    while let Some(bit) = r.read_bit() {
        if bit {
            return Err(malformed("non-zero padding"));
        }
    }

    Ok(QuantizedUpdate {
        dim,
        bits,
        classes,
        high_codes,
        anchor: f64::from(anchor),
        grid_radius: f64::from(grid_radius),
        high_count,
        payload_bits: mixed_payload_bits(dim, high_count, bits),
    })
}
