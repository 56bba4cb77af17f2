//! 16-bit fixed-point values stored in crossbar cells and vertex registers.
//!
//! Two interpretations share the same raw `u16`:
//!
//! - [`FxFormat::Frac`]: unsigned Q0.16, value = raw / 2^16, range [0, 1 - 2^-16].
//! - [`FxFormat::Int`]: plain unsigned integer, with `0xFFFF` reserved as
//!   [`Fx16::M`] ("no edge" / infinite distance). `M` absorbs addition.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Scale of the fractional format.
pub const FRAC_ONE: f64 = 65536.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FxFormat {
    Frac,
    Int,
}

#[derive(Debug, Error, PartialEq)]
pub enum FxError {
    #[error("{value} is outside the fractional range [0, 1)")]
    FracRange { value: f64 },
    #[error("{value} is not an integer in 0..=65535")]
    IntRange { value: f64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fx16(pub u16);

impl Fx16 {
    pub const ZERO: Fx16 = Fx16(0);
    /// Reserved maximum: absent edge in INT tiles, unreachable distance.
    pub const M: Fx16 = Fx16(u16::MAX);
    /// Largest fractional value, 1 - 2^-16. Used wherever a "1.0" is needed.
    pub const FRAC_MAX: Fx16 = Fx16(u16::MAX);

    #[inline]
    pub fn raw(self) -> u16 {
        self.0
    }

    #[inline]
    pub fn is_m(self) -> bool {
        self == Self::M
    }

    /// Strict encode: rejects values outside the format's domain.
    pub fn encode(x: f64, format: FxFormat) -> Result<Fx16, FxError> {
        match format {
            FxFormat::Frac => {
                if !(0.0..1.0).contains(&x) {
                    return Err(FxError::FracRange { value: x });
                }
                Ok(Fx16(round_frac(x)))
            }
            FxFormat::Int => {
                if !(0.0..=65535.0).contains(&x) || x.fract() != 0.0 {
                    return Err(FxError::IntRange { value: x });
                }
                Ok(Fx16(x as u16))
            }
        }
    }

    /// Encode with clamping into the representable range. The flag reports
    /// whether the input had to be clamped (NaN clamps to zero).
    ///
    /// INT values are rounded to nearest and clamped to `0..=0xFFFE`, since
    /// `0xFFFF` is the reserved `M`.
    pub fn encode_clamped(x: f64, format: FxFormat) -> (Fx16, bool) {
        if x.is_nan() {
            return (Fx16::ZERO, true);
        }
        match format {
            FxFormat::Frac => {
                if x < 0.0 {
                    (Fx16::ZERO, true)
                } else if x >= 1.0 {
                    (Fx16::FRAC_MAX, true)
                } else {
                    (Fx16(round_frac(x)), false)
                }
            }
            FxFormat::Int => {
                let r = x.round_ties_even();
                if r < 0.0 {
                    (Fx16::ZERO, true)
                } else if r > 65534.0 {
                    (Fx16(0xFFFE), true)
                } else {
                    (Fx16(r as u16), r != x)
                }
            }
        }
    }

    pub fn decode(self, format: FxFormat) -> f64 {
        match format {
            FxFormat::Frac => self.0 as f64 / FRAC_ONE,
            FxFormat::Int => {
                if self.is_m() {
                    f64::INFINITY
                } else {
                    self.0 as f64
                }
            }
        }
    }

    /// Saturating INT add with `M` absorbing.
    #[inline]
    pub fn sat_add(self, other: Fx16) -> Fx16 {
        if self.is_m() || other.is_m() {
            return Fx16::M;
        }
        Fx16(self.0.saturating_add(other.0))
    }
}

impl fmt::Display for Fx16 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_m() {
            write!(f, "M")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// Round-to-nearest, ties-to-even of `x * 2^16` for `x` in [0, 1).
/// Values that round up to 2^16 saturate to `0xFFFF`.
fn round_frac(x: f64) -> u16 {
    // x * 2^16 is exact in f64, so the only rounding happens here.
    let scaled = (x * FRAC_ONE).round_ties_even();
    scaled.min(65535.0) as u16
}

/// Divide a wide non-negative accumulator by 2^`shift`, rounding to nearest
/// with ties to even.
#[inline]
pub fn rescale_rne(value: u64, shift: u32) -> u64 {
    if shift == 0 {
        return value;
    }
    let q = value >> shift;
    let rem = value & ((1u64 << shift) - 1);
    let half = 1u64 << (shift - 1);
    if rem > half || (rem == half && q & 1 == 1) {
        q + 1
    } else {
        q
    }
}

#[inline]
pub fn saturate_u16(value: u64) -> Fx16 {
    Fx16(value.min(u16::MAX as u64) as u16)
}
