//! Comparator codecs: symmetric uniform quantization and Top-q
//! sparsification.

use serde::{Deserialize, Serialize};

use super::mixed::{check_input, grid_intervals, max_abs};
use super::QuantError;

/// Width at which values are sent verbatim (classic FL).
pub const PASSTHROUGH_BITS: u32 = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum UniformValues {
    /// Grid levels on `2^b` points over `[-scale, scale]`.
    Levels(Vec<u64>),
    Raw(Vec<f64>),
}

impl UniformValues {
    fn len(&self) -> usize {
        match self {
            Self::Levels(v) => v.len(),
            Self::Raw(v) => v.len(),
        }
    }

    fn decode(&self, bits: u32, scale: f64) -> Vec<f64> {
        match self {
            Self::Raw(v) => v.clone(),
            Self::Levels(levels) => {
                let intervals = grid_intervals(bits) as f64;
                levels
                    .iter()
                    .map(|&k| scale * (2.0 * (k as f64 / intervals) - 1.0))
                    .collect()
            }
        }
    }
}

fn quantize_symmetric(values: &[f64], bits: u32, scale: f64) -> UniformValues {
    if bits >= PASSTHROUGH_BITS {
        return UniformValues::Raw(values.to_vec());
    }
    let intervals = grid_intervals(bits) as f64;
    let levels = values
        .iter()
        .map(|&v| {
            if scale == 0.0 {
                // Zero input: the level nearest 0 on an odd-point grid.
                return (intervals / 2.0).round() as u64;
            }
            ((v / scale + 1.0) / 2.0 * intervals)
                .round()
                .clamp(0.0, intervals) as u64
        })
        .collect();
    UniformValues::Levels(levels)
}

fn check_bits(bits: u32) -> Result<(), QuantError> {
    if !(1..=PASSTHROUGH_BITS).contains(&bits) {
        return Err(QuantError::InvalidSpec(format!(
            "bits must lie in [1,{PASSTHROUGH_BITS}], got {bits}"
        )));
    }
    Ok(())
}

/// Every element on a symmetric `b`-bit grid, plus a 32-bit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformUpdate {
    pub dim: usize,
    pub bits: u32,
    pub scale: f64,
    pub values: UniformValues,
    pub payload_bits: u64,
}

impl UniformUpdate {
    pub fn is_degenerate(&self) -> bool {
        self.scale == 0.0
    }
}

pub fn encode_uniform(delta_w: &[f64], bits: u32) -> Result<UniformUpdate, QuantError> {
    check_bits(bits)?;
    check_input(delta_w)?;
    let scale = max_abs(delta_w);
    Ok(UniformUpdate {
        dim: delta_w.len(),
        bits,
        scale,
        values: quantize_symmetric(delta_w, bits, scale),
        payload_bits: delta_w.len() as u64 * u64::from(bits) + 32,
    })
}

pub fn decode_uniform(update: &UniformUpdate) -> Result<Vec<f64>, QuantError> {
    if update.values.len() != update.dim {
        return Err(QuantError::MalformedPayload(format!(
            "{} values for dimension {}",
            update.values.len(),
            update.dim
        )));
    }
    if update.scale == 0.0 {
        return Ok(vec![0.0; update.dim]);
    }
    Ok(update.values.decode(update.bits, update.scale))
}

/// The `⌈q·d⌉` largest-magnitude entries on a symmetric grid; everything
/// else decodes to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseUpdate {
    pub dim: usize,
    pub bits: u32,
    pub scale: f64,
    /// Kept positions, ascending.
    pub indices: Vec<usize>,
    pub values: UniformValues,
    pub payload_bits: u64,
}

impl SparseUpdate {
    pub fn kept(&self) -> usize {
        self.indices.len()
    }
}

pub fn kept_count(fraction: f64, dim: usize) -> usize {
    // Guard against products like 0.1 * 30 = 3.0000000000000004.
    ((fraction * dim as f64 - 1e-9).ceil() as usize).clamp(1, dim)
}

/// `⌈log2 d⌉`, the cost of one explicit index.
pub fn index_bits(dim: usize) -> u64 {
    if dim <= 1 {
        0
    } else {
        u64::from(usize::BITS - (dim - 1).leading_zeros())
    }
}

pub fn encode_topq(
    delta_w: &[f64],
    fraction: f64,
    bits: u32,
    charge_indices: bool,
) -> Result<SparseUpdate, QuantError> {
    check_bits(bits)?;
    check_input(delta_w)?;
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(QuantError::InvalidSpec(format!(
            "top-q fraction must lie in (0,1], got {fraction}"
        )));
    }
    let dim = delta_w.len();
    let kept = kept_count(fraction, dim);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        delta_w[b]
            .abs()
            .total_cmp(&delta_w[a].abs())
            .then(a.cmp(&b))
    });
    let mut indices = order[..kept].to_vec();
    indices.sort_unstable();

    let kept_values: Vec<f64> = indices.iter().map(|&i| delta_w[i]).collect();
    let scale = max_abs(&kept_values);
    let per_entry = u64::from(bits) + if charge_indices { index_bits(dim) } else { 0 };
    Ok(SparseUpdate {
        dim,
        bits,
        scale,
        values: quantize_symmetric(&kept_values, bits, scale),
        indices,
        payload_bits: kept as u64 * per_entry + 32,
    })
}

pub fn decode_topq(update: &SparseUpdate) -> Result<Vec<f64>, QuantError> {
    if update.values.len() != update.indices.len()
        || update.indices.iter().any(|&i| i >= update.dim)
    {
        return Err(QuantError::MalformedPayload(
            "sparse indices inconsistent with values or dimension".into(),
        ));
    }
    let mut out = vec![0.0; update.dim];
    if update.scale == 0.0 {
        return Ok(out);
    }
    for (&i, v) in update
        .indices
        .iter()
        .zip(update.values.decode(update.bits, update.scale))
    {
        out[i] = v;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn passthrough_at_32_bits() {
        let v = [0.123456789, -1e-9, 3.5];
        let u = encode_uniform(&v, 32).unwrap();
        assert_eq!(u.payload_bits, 32 * 3 + 32);
        assert_eq!(decode_uniform(&u).unwrap(), v.to_vec());
    }

    #[test]
    fn two_bit_endpoints_exact() {
        let u = encode_uniform(&[1.0, -1.0], 2).unwrap();
        assert_eq!(u.values, UniformValues::Levels(vec![3, 0]));
        assert_eq!(decode_uniform(&u).unwrap(), vec![1.0, -1.0]);
    }

    #[test]
    fn max_element_recovered_exactly() {
        for bits in [1, 2, 3, 8, 16, 31] {
            let v = [0.3, -0.71, 0.2, 0.05];
            let d = decode_uniform(&encode_uniform(&v, bits).unwrap()).unwrap();
            assert_eq!(d[1], -0.71);
        }
    }

    #[test]
    fn uniform_error_within_half_step() {
        let v: Vec<f64> = (0..50).map(|i| ((i * 37) % 23) as f64 - 11.3).collect();
        for bits in [2, 4, 10] {
            let d = decode_uniform(&encode_uniform(&v, bits).unwrap()).unwrap();
            let bound = max_abs(&v) / grid_intervals(bits) as f64;
            for (a, b) in v.iter().zip(&d) {
                assert!((a - b).abs() <= bound * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn uniform_zero_vector() {
        let u = encode_uniform(&[0.0; 3], 4).unwrap();
        assert!(u.is_degenerate());
        assert_eq!(decode_uniform(&u).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn topq_sort_and_truncate() {
        let s = encode_topq(&[3.0, 1.0, 2.0, 0.0], 0.5, 8, false).unwrap();
        assert_eq!(s.indices, vec![0, 2]);
        let d = decode_topq(&s).unwrap();
        assert_eq!(d[0], 3.0);
        assert_eq!(d[1], 0.0);
        assert_eq!(d[3], 0.0);
        assert!((d[2] - 2.0).abs() <= 3.0 / 255.0);
        assert_eq!(s.payload_bits, 2 * 8 + 32);
    }

    #[test]
    fn topq_full_fraction_equals_uniform() {
        let v = [0.4, -0.2, 0.9, -0.75, 0.0];
        for bits in [2, 5, 32] {
            let a = decode_topq(&encode_topq(&v, 1.0, bits, false).unwrap()).unwrap();
            let b = decode_uniform(&encode_uniform(&v, bits).unwrap()).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn topq_single_survivor_is_exact() {
        let v = [0.4, -0.2, -0.9, 0.75];
        let s = encode_topq(&v, 0.25, 3, false).unwrap();
        assert_eq!(s.kept(), 1);
        assert_eq!(decode_topq(&s).unwrap(), vec![0.0, 0.0, -0.9, 0.0]);
    }

    #[test]
    fn topq_index_charging() {
        let v: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let s = encode_topq(&v, 0.1, 4, true).unwrap();
        assert_eq!(s.kept(), 10);
        assert_eq!(index_bits(100), 7);
        assert_eq!(s.payload_bits, 10 * (4 + 7) + 32);
        assert_eq!(index_bits(1), 0);
        assert_eq!(index_bits(2), 1);
        assert_eq!(index_bits(1024), 10);
        assert_eq!(index_bits(1025), 11);
    }

    #[test]
    fn kept_count_guards_float_products() {
        assert_eq!(kept_count(0.1, 30), 3);
        assert_eq!(kept_count(1e-9, 30), 1);
        assert_eq!(kept_count(1.0, 7), 7);
        assert_eq!(kept_count(0.34, 3), 2);
    }

    #[test]
    fn invalid_arguments() {
        assert!(encode_uniform(&[1.0], 0).is_err());
        assert!(encode_uniform(&[1.0], 33).is_err());
        assert!(encode_topq(&[1.0], 0.0, 4, false).is_err());
        assert!(encode_topq(&[1.0], 1.5, 4, false).is_err());
    }
}
