// SPDX-License-Identifier: Apache-2.0

//! Parameterized signed fixed-point arithmetic.
//!
//! A [`QFormat`] describes a two's-complement number with one sign bit,
//! `int_bits` integer bits and `frac_bits` fractional bits. Every operation
//! saturates at the format bounds; nothing ever wraps. Rounding is always
//! round-to-nearest with ties away from zero.
//!
//! The network datapath uses [`QFormat::Q1_15`] for weights, biases and
//! neuron state, and [`QFormat::Q12_15`] (28 bits) as the adder-tree
//! accumulator.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FixedPointError {
    #[error("invalid format Q{int_bits}.{frac_bits}: total width must be in 2..=64")]
    InvalidFormat { int_bits: u32, frac_bits: u32 },
    #[error("cannot quantize non-finite value {0}")]
    NonFinite(f64),
    #[error("format mismatch: {lhs} vs {rhs}")]
    FormatMismatch { lhs: QFormat, rhs: QFormat },
    #[error("raw value {raw} out of range for {fmt}")]
    RawOutOfRange { raw: i128, fmt: QFormat },
    #[error("cannot widen {from} into narrower or differently scaled {to}")]
    BadWiden { from: QFormat, to: QFormat },
}

/// Signed fixed-point format: 1 sign bit + `int_bits` + `frac_bits`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawFormat", into = "RawFormat")]
pub struct QFormat {
    int_bits: u32,
    frac_bits: u32,
}

#[derive(Serialize, Deserialize)]
struct RawFormat {
    int_bits: u32,
    frac_bits: u32,
}

impl TryFrom<RawFormat> for QFormat {
    type Error = FixedPointError;
    fn try_from(r: RawFormat) -> Result<Self, Self::Error> {
        QFormat::new(r.int_bits, r.frac_bits)
    }
}

impl From<QFormat> for RawFormat {
    fn from(f: QFormat) -> Self {
        RawFormat {
            int_bits: f.int_bits,
            frac_bits: f.frac_bits,
        }
    }
}

impl QFormat {
    /// 16-bit network format, range [-1, 1 - 2^-15].
    pub const Q1_15: QFormat = QFormat {
        int_bits: 0,
        frac_bits: 15,
    };
    /// 28-bit accumulator format with the same scaling as Q1.15.
    pub const Q12_15: QFormat = QFormat {
        int_bits: 12,
        frac_bits: 15,
    };
    /// 8-bit format, range [-1, 0.9921875].
    pub const Q1_7: QFormat = QFormat {
        int_bits: 0,
        frac_bits: 7,
    };

    pub fn new(int_bits: u32, frac_bits: u32) -> Result<Self, FixedPointError> {
        let width = 1u64 + int_bits as u64 + frac_bits as u64;
        if !(2..=64).contains(&width) {
            return Err(FixedPointError::InvalidFormat {
                int_bits,
                frac_bits,
            });
        }
        Ok(QFormat {
            int_bits,
            frac_bits,
        })
    }

    pub const fn int_bits(self) -> u32 {
        self.int_bits
    }

    pub const fn frac_bits(self) -> u32 {
        self.frac_bits
    }

    /// Total bit width including the sign bit.
    pub const fn width(self) -> u32 {
        1 + self.int_bits + self.frac_bits
    }

    pub const fn min_raw(self) -> i64 {
        if self.width() == 64 {
            i64::MIN
        } else {
            -(1i64 << (self.width() - 1))
        }
    }

    pub const fn max_raw(self) -> i64 {
        if self.width() == 64 {
            i64::MAX
        } else {
            (1i64 << (self.width() - 1)) - 1
        }
    }

    /// Weight of one LSB, `2^-frac_bits`.
    pub fn resolution(self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    pub fn min_value(self) -> f64 {
        self.min_raw() as f64 * self.resolution()
    }

    pub fn max_value(self) -> f64 {
        self.max_raw() as f64 * self.resolution()
    }

    pub fn contains_raw(self, raw: i128) -> bool {
        raw >= self.min_raw() as i128 && raw <= self.max_raw() as i128
    }

    /// Clamp a wide intermediate into range, reporting whether it clipped.
    fn clamp_raw(self, raw: i128) -> (i64, bool) {
        if raw > self.max_raw() as i128 {
            (self.max_raw(), true)
        } else if raw < self.min_raw() as i128 {
            (self.min_raw(), true)
        } else {
            (raw as i64, false)
        }
    }
}

impl fmt::Display for QFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Sign-inclusive naming: Q1.15 is 16 bits, the accumulator prints as Q13.15.
        write!(
            f,
            "Q{}.{} ({}-bit)",
            self.int_bits + 1,
            self.frac_bits,
            self.width()
        )
    }
}

/// A fixed-point value: a raw two's-complement integer plus its format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QValue {
    raw: i64,
    fmt: QFormat,
}

impl QValue {
    pub fn zero(fmt: QFormat) -> Self {
        QValue { raw: 0, fmt }
    }

    pub fn max(fmt: QFormat) -> Self {
        QValue {
            raw: fmt.max_raw(),
            fmt,
        }
    }

    pub fn min(fmt: QFormat) -> Self {
        QValue {
            raw: fmt.min_raw(),
            fmt,
        }
    }

    pub fn from_raw(raw: i64, fmt: QFormat) -> Result<Self, FixedPointError> {
        if fmt.contains_raw(raw as i128) {
            Ok(QValue { raw, fmt })
        } else {
            Err(FixedPointError::RawOutOfRange {
                raw: raw as i128,
                fmt,
            })
        }
    }

    /// Build from an arbitrary-width raw integer, saturating into `fmt`.
    /// The flag is `true` when the value was clipped.
    pub fn saturating_from_raw(raw: i128, fmt: QFormat) -> (Self, bool) {
        let (raw, clipped) = fmt.clamp_raw(raw);
        (QValue { raw, fmt }, clipped)
    }

    /// Nearest representable value to `x`, ties away from zero, saturating.
    pub fn quantize(x: f64, fmt: QFormat) -> Result<Self, FixedPointError> {
        Self::quantize_reporting(x, fmt).map(|(q, _)| q)
    }

    /// Like [`QValue::quantize`], also reporting whether `x` saturated.
    pub fn quantize_reporting(x: f64, fmt: QFormat) -> Result<(Self, bool), FixedPointError> {
        if !x.is_finite() {
            return Err(FixedPointError::NonFinite(x));
        }
        // f64::round is ties-away-from-zero.
        let scaled = (x * (fmt.frac_bits as f64).exp2()).round();
        let (raw, clipped) = if scaled >= fmt.max_raw() as f64 {
            (fmt.max_raw(), scaled > fmt.max_raw() as f64)
        } else if scaled <= fmt.min_raw() as f64 {
            (fmt.min_raw(), scaled < fmt.min_raw() as f64)
        } else {
            (scaled as i64, false)
        };
        Ok((QValue { raw, fmt }, clipped))
    }

    /// Exact real value `raw * 2^-frac_bits` (exact for widths up to 53 bits).
    pub fn dequantize(self) -> f64 {
        self.raw as f64 * self.fmt.resolution()
    }

    pub fn raw(self) -> i64 {
        self.raw
    }

    pub fn format(self) -> QFormat {
        self.fmt
    }

    pub fn is_zero(self) -> bool {
        self.raw == 0
    }

    fn same_format(self, other: QValue) -> Result<QFormat, FixedPointError> {
        if self.fmt == other.fmt {
            Ok(self.fmt)
        } else {
            Err(FixedPointError::FormatMismatch {
                lhs: self.fmt,
                rhs: other.fmt,
            })
        }
    }

    pub fn sat_add(self, other: QValue) -> Result<Self, FixedPointError> {
        let fmt = self.same_format(other)?;
        Ok(Self::saturating_from_raw(self.raw as i128 + other.raw as i128, fmt).0)
    }

    pub fn sat_sub(self, other: QValue) -> Result<Self, FixedPointError> {
        let fmt = self.same_format(other)?;
        Ok(Self::saturating_from_raw(self.raw as i128 - other.raw as i128, fmt).0)
    }

    /// Product rescaled by `frac_bits` with round-half-away, then clamped.
    pub fn sat_mul(self, other: QValue) -> Result<Self, FixedPointError> {
        let fmt = self.same_format(other)?;
        let product = self.raw as i128 * other.raw as i128;
        let shifted = round_shift_right(product, fmt.frac_bits);
        Ok(Self::saturating_from_raw(shifted, fmt).0)
    }

    /// Sign-extend into a wider format with identical scaling.
    pub fn widen(self, acc_fmt: QFormat) -> Result<Self, FixedPointError> {
        if acc_fmt.frac_bits != self.fmt.frac_bits || acc_fmt.width() < self.fmt.width() {
            return Err(FixedPointError::BadWiden {
                from: self.fmt,
                to: acc_fmt,
            });
        }
        Ok(QValue {
            raw: self.raw,
            fmt: acc_fmt,
        })
    }

    /// Clamp into `fmt`, which must share the fractional bit count.
    pub fn narrow_saturating(self, fmt: QFormat) -> Result<Self, FixedPointError> {
        self.narrow_reporting(fmt).map(|(q, _)| q)
    }

    pub fn narrow_reporting(self, fmt: QFormat) -> Result<(Self, bool), FixedPointError> {
        if fmt.frac_bits != self.fmt.frac_bits {
            return Err(FixedPointError::FormatMismatch {
                lhs: self.fmt,
                rhs: fmt,
            });
        }
        Ok(Self::saturating_from_raw(self.raw as i128, fmt))
    }
}

impl PartialOrd for QValue {
    /// Values in different formats are unordered.
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        (self.fmt == other.fmt).then(|| self.raw.cmp(&other.raw))
    }
}

impl fmt::Display for QValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} raw {})", self.dequantize(), self.fmt, self.raw)
    }
}

/// `x / 2^shift`, rounded to nearest with ties away from zero.
fn round_shift_right(x: i128, shift: u32) -> i128 {
    if shift == 0 {
        return x;
    }
    let half = 1i128 << (shift - 1);
    if x >= 0 {
        (x + half) >> shift
    } else {
        -((-x + half) >> shift)
    }
}
