//! Adaptive mixed-resolution codec.
//!
//! Elements whose magnitude is at least `λ·‖δw‖∞` are quantized with `b`
//! bits on a uniform grid spanning `[anchor, ‖δw‖∞]`, where the anchor is
//! the smallest such magnitude. Every other element is reduced to its sign
//! and decodes to `±anchor/2`.

use serde::{Deserialize, Serialize};

use super::QuantError;

/// Threshold and high-resolution width for one user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantSpec {
    pub lambda: f64,
    pub bits: u32,
}

pub const MAX_CODE_BITS: u32 = 32;

impl QuantSpec {
    pub fn new(lambda: f64, bits: u32) -> Result<Self, QuantError> {
        let spec = Self { lambda, bits };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), QuantError> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(QuantError::InvalidSpec(format!(
                "lambda must lie in (0,1), got {}",
                self.lambda
            )));
        }
        if !(2..=MAX_CODE_BITS).contains(&self.bits) {
            return Err(QuantError::InvalidSpec(format!(
                "bits must lie in [2,{MAX_CODE_BITS}], got {}",
                self.bits
            )));
        }
        Ok(())
    }

    /// Number of grid intervals, `2^b - 1`.
    pub fn intervals(&self) -> u64 {
        grid_intervals(self.bits)
    }
}

pub(crate) fn grid_intervals(bits: u32) -> u64 {
    (1u64 << bits) - 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ElementClass {
    LowPos,
    LowNeg,
    High,
}

/// Grid index and sign of one high-resolution element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HighCode {
    pub level: u64,
    pub negative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedUpdate {
    pub dim: usize,
    pub bits: u32,
    pub classes: Vec<ElementClass>,
    /// One code per `High` element, in element order.
    pub high_codes: Vec<HighCode>,
    /// Smallest high-resolution magnitude; lies on the grid (level 0).
    pub anchor: f64,
    pub grid_radius: f64,
    pub high_count: usize,
    pub payload_bits: u64,
}

impl QuantizedUpdate {
    /// True for the all-zero input, which carries no grid.
    pub fn is_degenerate(&self) -> bool {
        self.high_count == 0
    }

    /// Fraction of high-resolution elements, `s = d̄/d`.
    pub fn high_fraction(&self) -> f64 {
        self.high_count as f64 / self.dim as f64
    }

    /// Reconstructed magnitude for a grid level.
    pub fn grid_value(&self, level: u64) -> f64 {
        let intervals = grid_intervals(self.bits);
        self.anchor + self.grid_radius * (level as f64 / intervals as f64)
    }
}

/// `d̄·b + (d - d̄) + 32`, the air-interface cost of one mixed update.
pub fn mixed_payload_bits(dim: usize, high_count: usize, bits: u32) -> u64 {
    high_count as u64 * u64::from(bits) + (dim - high_count) as u64 + 32
}

pub(crate) fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub(crate) fn check_input(values: &[f64]) -> Result<(), QuantError> {
    if values.is_empty() {
        return Err(QuantError::EmptyInput);
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(QuantError::NonFinite { index: i });
    }
    Ok(())
}

pub fn encode_mixed(delta_w: &[f64], spec: QuantSpec) -> Result<QuantizedUpdate, QuantError> {
    spec.validate()?;
    check_input(delta_w)?;
    let dim = delta_w.len();
    let top = max_abs(delta_w);

    if top == 0.0 {
        return Ok(QuantizedUpdate {
            dim,
            bits: spec.bits,
            classes: vec![ElementClass::LowNeg; dim],
            high_codes: Vec::new(),
            anchor: 0.0,
            grid_radius: 0.0,
            high_count: 0,
            payload_bits: mixed_payload_bits(dim, 0, spec.bits),
        });
    }

    let classes: Vec<ElementClass> = delta_w
        .iter()
        .map(|&v| {
            if v.abs() / top >= spec.lambda {
                ElementClass::High
            } else if v > 0.0 {
                ElementClass::LowPos
            } else {
                ElementClass::LowNeg
            }
        })
        .collect();

    let anchor = delta_w
        .iter()
        .zip(&classes)
        .filter(|(_, &c)| c == ElementClass::High)
        .map(|(v, _)| v.abs())
        .fold(f64::INFINITY, f64::min);
    let grid_radius = top - anchor;
    let intervals = spec.intervals();
    let step = grid_radius / intervals as f64;

    let high_codes: Vec<HighCode> = delta_w
        .iter()
        .zip(&classes)
        .filter(|(_, &c)| c == ElementClass::High)
        .map(|(&v, _)| {
            let level = if step > 0.0 {
                ((v.abs() - anchor) / step)
                    .round()
                    .clamp(0.0, intervals as f64) as u64
            } else {
                0
            };
            HighCode {
                level,
                negative: v < 0.0,
            }
        })
        .collect();
    let high_count = high_codes.len();
    debug_assert!(high_count >= 1, "the largest element is always high-resolution");

    Ok(QuantizedUpdate {
        dim,
        bits: spec.bits,
        classes,
        high_codes,
        anchor,
        grid_radius,
        high_count,
        payload_bits: mixed_payload_bits(dim, high_count, spec.bits),
    })
}

pub fn decode_mixed(update: &QuantizedUpdate) -> Result<Vec<f64>, QuantError> {
    let malformed = |msg: String| Err(QuantError::MalformedPayload(msg));
    if update.classes.len() != update.dim {
        return malformed(format!(
            "{} classes for dimension {}",
            update.classes.len(),
            update.dim
        ));
    }
    let marked = update
        .classes
        .iter()
        .filter(|&&c| c == ElementClass::High)
        .count();
    if marked != update.high_count || update.high_codes.len() != update.high_count {
        return malformed(format!(
            "high_count {} but {} high classes and {} codes",
            update.high_count,
            marked,
            update.high_codes.len()
        ));
    }
    if !(update.anchor.is_finite() && update.anchor >= 0.0)
        || !(update.grid_radius.is_finite() && update.grid_radius >= 0.0)
    {
        return malformed("anchor and grid radius must be finite and non-negative".into());
    }
    if !(2..=MAX_CODE_BITS).contains(&update.bits) {
        return malformed(format!("unsupported code width {}", update.bits));
    }
    let intervals = grid_intervals(update.bits);
    if let Some(code) = update.high_codes.iter().find(|c| c.level > intervals) {
        return malformed(format!("grid level {} exceeds {}", code.level, intervals));
    }

    let half = update.anchor / 2.0;
    let mut codes = update.high_codes.iter();
    Ok(update
        .classes
        .iter()
        .map(|class| match class {
            ElementClass::LowPos => half,
            ElementClass::LowNeg => -half,
            ElementClass::High => {
                let code = codes.next().expect("code count checked above");
                let magnitude = update.grid_value(code.level);
                if code.negative {
                    -magnitude
                } else {
                    magnitude
                }
            }
        })
        .collect())
}

/// Worst-case error constant `c` with `‖ε‖∞ ≤ c‖δw‖∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBound {
    pub c: f64,
}

pub fn error_bound(spec: QuantSpec) -> ErrorBound {
    let denom = spec.intervals() as f64;
    let low = spec.lambda / 2.0 + (1.0 - spec.lambda) / (4.0 * denom);
    let high = (1.0 - spec.lambda) / (2.0 * denom);
    ErrorBound { c: low.max(high) }
}

/// Per-element bound on the error of high-resolution elements, relative
/// to `‖δw‖∞`: `(1 - λ) / (2(2^b - 1))`.
pub fn high_resolution_bound(spec: QuantSpec) -> f64 {
    (1.0 - spec.lambda) / (2.0 * spec.intervals() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ElementClass::*;

    fn spec(lambda: f64, bits: u32) -> QuantSpec {
        QuantSpec::new(lambda, bits).unwrap()
    }

    #[test]
    fn four_element_trace() {
        let q = encode_mixed(&[0.8, -0.1, 0.05, -0.9], spec(0.2, 3)).unwrap();
        assert_eq!(q.classes, vec![High, LowNeg, LowPos, High]);
        assert_eq!(q.high_count, 2);
        assert_eq!(q.anchor, 0.8);
        assert!((q.grid_radius - 0.1).abs() < 1e-15);
        assert_eq!(q.payload_bits, 40);
        assert_eq!(
            q.high_codes,
            vec![
                HighCode {
                    level: 0,
                    negative: false
                },
                HighCode {
                    level: 7,
                    negative: true
                }
            ]
        );
        let decoded = decode_mixed(&q).unwrap();
        assert_eq!(decoded, vec![0.8, -0.4, 0.4, -0.9]);
    }

    #[test]
    fn uniform_vector_is_all_high_with_zero_radius() {
        for lambda in [0.01, 0.5, 0.99] {
            let q = encode_mixed(&[1.0; 4], spec(lambda, 4)).unwrap();
            assert!(q.classes.iter().all(|&c| c == High));
            assert_eq!(q.anchor, 1.0);
            assert_eq!(q.grid_radius, 0.0);
            assert_eq!(decode_mixed(&q).unwrap(), vec![1.0; 4]);
        }
    }

    #[test]
    fn payload_formula_example() {
        assert_eq!(mixed_payload_bits(100, 10, 4), 162);
        // Vector with exactly ten elements at or above the threshold.
        let mut v = vec![0.001; 100];
        for (i, x) in v.iter_mut().enumerate().take(10) {
            *x = 1.0 - i as f64 * 0.01;
        }
        let q = encode_mixed(&v, spec(0.5, 4)).unwrap();
        assert_eq!(q.high_count, 10);
        assert_eq!(q.payload_bits, 162);
    }

    #[test]
    fn all_zero_vector_is_degenerate() {
        let q = encode_mixed(&[0.0; 5], spec(0.2, 4)).unwrap();
        assert!(q.is_degenerate());
        assert!(q.classes.iter().all(|&c| c == LowNeg));
        assert_eq!(q.payload_bits, 5 + 32);
        assert_eq!(decode_mixed(&q).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn threshold_tie_is_high() {
        let q = encode_mixed(&[1.0, 0.25, -0.25, 0.2499], spec(0.25, 2)).unwrap();
        assert_eq!(q.classes, vec![High, High, High, LowPos]);
    }

    #[test]
    fn zero_entry_below_threshold_is_low_negative() {
        let q = encode_mixed(&[0.0, 1.0], spec(0.3, 2)).unwrap();
        assert_eq!(q.classes[0], LowNeg);
        assert_eq!(decode_mixed(&q).unwrap()[0], -0.5);
    }

    #[test]
    fn grid_aligned_values_round_trip_exactly() {
        // anchor 1, top 4, b = 2 → grid {1, 2, 3, 4}.
        let v = [1.0, -2.0, 3.0, 4.0, 0.1];
        let q = encode_mixed(&v, spec(0.25, 2)).unwrap();
        let d = decode_mixed(&q).unwrap();
        assert_eq!(&d[..4], &v[..4]);
        assert_eq!(d[4], 0.5);
    }

    #[test]
    fn error_bound_examples() {
        let c = error_bound(spec(0.2, 10)).c;
        assert!((c - (0.1 + 0.8 / 4092.0)).abs() < 1e-15);
        assert!((c - 0.100_195_503_421_309_87).abs() < 1e-15);
        let c = error_bound(spec(0.4, 4)).c;
        assert!((c - 0.21).abs() < 1e-15);
        let c = error_bound(spec(0.3, 32)).c;
        assert!((c - 0.15).abs() < 1e-9);
        // Small λ with coarse grid: the high-resolution term dominates.
        let s = spec(0.01, 2);
        assert_eq!(error_bound(s).c, high_resolution_bound(s));
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(QuantSpec::new(0.0, 4).is_err());
        assert!(QuantSpec::new(1.0, 4).is_err());
        assert!(QuantSpec::new(1.5, 4).is_err());
        assert!(QuantSpec::new(0.5, 1).is_err());
        assert!(QuantSpec::new(0.5, 33).is_err());
        assert!(QuantSpec::new(f64::NAN, 4).is_err());
    }

    #[test]
    fn non_finite_input_rejected() {
        assert!(matches!(
            encode_mixed(&[1.0, f64::NAN], spec(0.2, 4)),
            Err(QuantError::NonFinite { index: 1 })
        ));
        assert!(matches!(
            encode_mixed(&[], spec(0.2, 4)),
            Err(QuantError::EmptyInput)
        ));
    }

    #[test]
    fn inconsistent_update_is_malformed() {
        let mut q = encode_mixed(&[0.8, -0.1, 0.05, -0.9], spec(0.2, 3)).unwrap();
        q.high_count = 3;
        assert!(matches!(
            decode_mixed(&q),
            Err(QuantError::MalformedPayload(_))
        ));
        let mut q = encode_mixed(&[0.8, -0.1, 0.05, -0.9], spec(0.2, 3)).unwrap();
        q.high_codes[0].level = 8;
        assert!(decode_mixed(&q).is_err());
    }
}
