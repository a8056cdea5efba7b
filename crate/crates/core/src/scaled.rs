//! Floating-point values with an explicitly tracked binary exponent.
//!
//! Associated Legendre functions of large order are astronomically small
//! away from the equator (the factor `(1 - x^2)^(m/2)` alone underflows an
//! `f64` once `m` reaches a few thousand), yet they recover to order-one
//! magnitudes after enough steps of the degree recurrence. Carrying the
//! exponent in a separate integer keeps every intermediate representable.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// `mantissa * 2^exponent` with `|mantissa|` in `[0.5, 1)`, or exactly zero.
#[derive(Clone, Copy, PartialEq)]
pub struct ScaledReal {
    mantissa: f64,
    exponent: i64,
}

/// Exponent gap beyond which the smaller addend cannot affect the result.
const ALIGN_LIMIT: i64 = 64;

impl ScaledReal {
    pub const ZERO: ScaledReal = ScaledReal {
        mantissa: 0.0,
        exponent: 0,
    };

    pub const ONE: ScaledReal = ScaledReal {
        mantissa: 0.5,
        exponent: 1,
    };

    /// Builds a normalized value from an arbitrary mantissa and exponent.
    pub fn new(mantissa: f64, exponent: i64) -> Self {
        Self::normalize(mantissa, exponent)
    }

    #[inline]
    fn normalize(mantissa: f64, exponent: i64) -> Self {
        if mantissa == 0.0 {
            return Self::ZERO;
        }
        debug_assert!(mantissa.is_finite());
        let (m, e) = libm::frexp(mantissa);
        ScaledReal {
            mantissa: m,
            exponent: exponent + e as i64,
        }
    }

    #[inline]
    pub fn from_f64(value: f64) -> Self {
        Self::normalize(value, 0)
    }

    /// Converts back to `f64`, flushing to zero or saturating to infinity
    /// when the exponent leaves the representable range.
    #[inline]
    pub fn to_f64(self) -> f64 {
        if self.mantissa == 0.0 {
            return 0.0;
        }
        if self.exponent > 1100 {
            return self.mantissa.signum() * f64::INFINITY;
        }
        if self.exponent < -1200 {
            return self.mantissa.signum() * 0.0;
        }
        libm::ldexp(self.mantissa, self.exponent as i32)
    }

    pub fn mantissa(self) -> f64 {
        self.mantissa
    }

    pub fn exponent(self) -> i64 {
        self.exponent
    }

    pub fn is_zero(self) -> bool {
        self.mantissa == 0.0
    }

    pub fn abs(self) -> Self {
        ScaledReal {
            mantissa: self.mantissa.abs(),
            exponent: self.exponent,
        }
    }

    /// `-1`, `0` or `1`.
    pub fn signum(self) -> f64 {
        if self.mantissa == 0.0 {
            0.0
        } else {
            self.mantissa.signum()
        }
    }

    /// Multiplies by `2^shift` exactly.
    pub fn scale_pow2(self, shift: i64) -> Self {
        if self.mantissa == 0.0 {
            self
        } else {
            ScaledReal {
                mantissa: self.mantissa,
                exponent: self.exponent + shift,
            }
        }
    }

    pub fn powi(self, mut n: u64) -> Self {
        let mut base = self;
        let mut acc = Self::ONE;
        while n > 0 {
            if n & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            n >>= 1;
        }
        acc
    }

    pub fn sqrt(self) -> Self {
        assert!(self.mantissa >= 0.0, "square root of a negative value");
        if self.mantissa == 0.0 {
            return self;
        }
        // Make the exponent even so it halves exactly.
        let (m, e) = if self.exponent % 2 == 0 {
            (self.mantissa, self.exponent)
        } else {
            (self.mantissa * 2.0, self.exponent - 1)
        };
        Self::normalize(m.sqrt(), e / 2)
    }

    /// Magnitude comparison that never overflows.
    pub fn cmp_abs(self, other: Self) -> Ordering {
        match (self.is_zero(), other.is_zero()) {
            (true, true) => Ordering::Equal,
            (true, false) => Ordering::Less,
            (false, true) => Ordering::Greater,
            (false, false) => self.exponent.cmp(&other.exponent).then(
                self.mantissa
                    .abs()
                    .partial_cmp(&other.mantissa.abs())
                    .unwrap_or(Ordering::Equal),
            ),
        }
    }
}

impl Default for ScaledReal {
    fn default() -> Self {
        Self::ZERO
    }
}

impl fmt::Debug for ScaledReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}*2^{}", self.mantissa, self.exponent)
    }
}

impl fmt::Display for ScaledReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.mantissa == 0.0 {
            return write!(f, "0");
        }
        // Decimal rendering through log10 keeps huge exponents readable.
        let log10 = self.mantissa.abs().log10() + self.exponent as f64 * std::f64::consts::LOG10_2;
        let dec_exp = log10.floor();
        let digits = 10f64.powf(log10 - dec_exp) * self.mantissa.signum();
        write!(f, "{digits:.15}e{dec_exp}")
    }
}

impl From<f64> for ScaledReal {
    fn from(value: f64) -> Self {
        Self::from_f64(value)
    }
}

impl Neg for ScaledReal {
    type Output = ScaledReal;
    #[inline]
    fn neg(self) -> ScaledReal {
        ScaledReal {
            mantissa: -self.mantissa,
            exponent: self.exponent,
        }
    }
}

impl Mul for ScaledReal {
    type Output = ScaledReal;
    #[inline]
    fn mul(self, rhs: ScaledReal) -> ScaledReal {
        Self::normalize(self.mantissa * rhs.mantissa, self.exponent + rhs.exponent)
    }
}

impl Mul<f64> for ScaledReal {
    type Output = ScaledReal;
    #[inline]
    fn mul(self, rhs: f64) -> ScaledReal {
        Self::normalize(self.mantissa * rhs, self.exponent)
    }
}

impl Div for ScaledReal {
    type Output = ScaledReal;
    #[inline]
    fn div(self, rhs: ScaledReal) -> ScaledReal {
        assert!(!rhs.is_zero(), "division of a scaled real by zero");
        Self::normalize(self.mantissa / rhs.mantissa, self.exponent - rhs.exponent)
    }
}

impl Add for ScaledReal {
    type Output = ScaledReal;
    #[inline]
    fn add(self, rhs: ScaledReal) -> ScaledReal {
        if self.mantissa == 0.0 {
            return rhs;
        }
        if rhs.mantissa == 0.0 {
            return self;
        }
        let (big, small) = if self.exponent >= rhs.exponent {
            (self, rhs)
        } else {
            (rhs, self)
        };
        let gap = big.exponent - small.exponent;
        if gap > ALIGN_LIMIT {
            return big;
        }
        let aligned = libm::ldexp(small.mantissa, -(gap as i32));
        Self::normalize(big.mantissa + aligned, big.exponent)
    }
}

impl Sub for ScaledReal {
    type Output = ScaledReal;
    #[inline]
    fn sub(self, rhs: ScaledReal) -> ScaledReal {
        self + (-rhs)
    }
}
