//! Gradient codecs and their bit accounting.
//!
//! ```
//! use cellfree_fl::quantizer::{decode_mixed, encode_mixed, QuantSpec};
//!
//! let spec = QuantSpec::new(0.2, 3).unwrap();
//! let q = encode_mixed(&[0.8, -0.1, 0.05, -0.9], spec).unwrap();
//! assert_eq!(q.payload_bits, 40);
//! assert_eq!(decode_mixed(&q).unwrap(), vec![0.8, -0.4, 0.4, -0.9]);
//! ```

mod baseline;
mod bits;
mod mixed;
pub mod wire;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use baseline::{
    decode_topq, decode_uniform, encode_topq, encode_uniform, index_bits, kept_count,
    SparseUpdate, UniformUpdate, UniformValues, PASSTHROUGH_BITS,
};
pub use bits::{BitReader, BitWriter};
pub use mixed::{
    decode_mixed, encode_mixed, error_bound, high_resolution_bound, mixed_payload_bits,
    ElementClass, ErrorBound, HighCode, QuantSpec, QuantizedUpdate, MAX_CODE_BITS,
};

#[derive(Debug, Error)]
pub enum QuantError {
    #[error("invalid quantizer parameters: {0}")]
    InvalidSpec(String),
    #[error("cannot quantize an empty vector")]
    EmptyInput,
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("malformed payload: {0}")]
    MalformedPayload(String),
}

/// One encoded local update, whatever codec produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    Mixed(QuantizedUpdate),
    Uniform(UniformUpdate),
    Sparse(SparseUpdate),
}

impl Payload {
    pub fn dim(&self) -> usize {
        match self {
            Self::Mixed(u) => u.dim,
            Self::Uniform(u) => u.dim,
            Self::Sparse(u) => u.dim,
        }
    }

    /// Bits sent over the air for this update.
    pub fn payload_bits(&self) -> u64 {
        match self {
            Self::Mixed(u) => u.payload_bits,
            Self::Uniform(u) => u.payload_bits,
            Self::Sparse(u) => u.payload_bits,
        }
    }

    /// Fraction of elements carried at full width (`s` for the mixed codec,
    /// 1 for uniform, kept fraction for Top-q).
    pub fn high_fraction(&self) -> f64 {
        match self {
            Self::Mixed(u) => u.high_fraction(),
            Self::Uniform(_) => 1.0,
            Self::Sparse(u) => u.kept() as f64 / u.dim as f64,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        match self {
            Self::Mixed(u) => u.is_degenerate(),
            Self::Uniform(u) => u.is_degenerate(),
            Self::Sparse(u) => u.scale == 0.0,
        }
    }

    pub fn decode(&self) -> Result<Vec<f64>, QuantError> {
        match self {
            Self::Mixed(u) => decode_mixed(u),
            Self::Uniform(u) => decode_uniform(u),
            Self::Sparse(u) => decode_topq(u),
        }
    }
}

/// Codec choice for one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Codec {
    Mixed(QuantSpec),
    Uniform {
        bits: u32,
    },
    TopQ {
        fraction: f64,
        bits: u32,
        charge_indices: bool,
    },
}

impl Codec {
    pub fn encode(&self, delta_w: &[f64]) -> Result<Payload, QuantError> {
        Ok(match *self {
            Self::Mixed(spec) => Payload::Mixed(encode_mixed(delta_w, spec)?),
            Self::Uniform { bits } => Payload::Uniform(encode_uniform(delta_w, bits)?),
            Self::TopQ {
                fraction,
                bits,
                charge_indices,
            } => Payload::Sparse(encode_topq(delta_w, fraction, bits, charge_indices)?),
        })
    }

    /// Per-element width the overhead reduction is measured against.
    pub fn element_bits(&self) -> u32 {
        match *self {
            Self::Mixed(spec) => spec.bits,
            Self::Uniform { bits } | Self::TopQ { bits, .. } => bits,
        }
    }
}

/// Percentage reduction in uplink overhead of the mixed codec versus a
/// `b1`-bit reference: `100 - 100/b1 - s(b-1)/b1`, with `s` in percent.
pub fn overhead_reduction(s_percent: f64, bits: u32, reference_bits: u32) -> f64 {
    let b1 = f64::from(reference_bits);
    100.0 - 100.0 / b1 - s_percent * f64::from(bits - 1) / b1
}
