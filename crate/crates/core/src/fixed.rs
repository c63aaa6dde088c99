//! Saturating Q16.16 fixed-point arithmetic, mirroring a 32-bit HDL datapath.

use serde::{Deserialize, Serialize};

pub const FRAC_BITS: u32 = 16;
pub const ONE_RAW: i32 = 1 << FRAC_BITS;

/// A signed Q16.16 value stored in an `i32` word.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fx(i32);

impl Fx {
    pub const ZERO: Fx = Fx(0);
    pub const ONE: Fx = Fx(ONE_RAW);
    pub const MAX: Fx = Fx(i32::MAX);
    pub const MIN: Fx = Fx(i32::MIN);

    pub fn from_bits(bits: i32) -> Fx {
        Fx(bits)
    }

    pub fn to_bits(self) -> i32 {
        self.0
    }

    /// Raw word as an unsigned bit pattern, for bitwise corruption semantics.
    pub fn to_word(self) -> u32 {
        self.0 as u32
    }

    pub fn from_word(word: u32) -> Fx {
        Fx(word as i32)
    }

    pub fn from_int(v: i32) -> Fx {
        Fx(v.saturating_mul(ONE_RAW))
    }

    pub fn from_f64(v: f64) -> Fx {
        let scaled = (v * ONE_RAW as f64).round();
        if scaled >= i32::MAX as f64 {
            Fx::MAX
        } else if scaled <= i32::MIN as f64 {
            Fx::MIN
        } else {
            Fx(scaled as i32)
        }
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / ONE_RAW as f64
    }

    pub fn add(self, rhs: Fx) -> Fx {
        Fx(self.0.saturating_add(rhs.0))
    }

    pub fn sub(self, rhs: Fx) -> Fx {
        Fx(self.0.saturating_sub(rhs.0))
    }

    /// Round-to-nearest product, saturating at the i32 range.
    pub fn mul(self, rhs: Fx) -> Fx {
        let wide = (self.0 as i64 * rhs.0 as i64 + (1 << (FRAC_BITS - 1))) >> FRAC_BITS;
        if wide > i32::MAX as i64 {
            Fx::MAX
        } else if wide < i32::MIN as i64 {
            Fx::MIN
        } else {
            Fx(wide as i32)
        }
    }

    pub fn clamp(self, lo: Fx, hi: Fx) -> Fx {
        Fx(self.0.clamp(lo.0, hi.0))
    }

    /// Flip bit `j` (0 = LSB of the fraction, 31 = sign) of the raw word.
    pub fn flip_bit(self, j: u32) -> Fx {
        Fx(self.0 ^ (1i32 << (j & 31)))
    }
}

impl std::fmt::Debug for Fx {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fx({})", self.to_f64())
    }
}

impl std::fmt::Display for Fx {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}
