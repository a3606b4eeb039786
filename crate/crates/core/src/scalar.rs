//! Scalar abstraction for the divergence-bound arithmetic.
//!
//! The bound routines are generic over [`Real`]. Any `num_traits::Float`
//! (`f32`, `f64`) works and reports overflow once a moment leaves its range.
//! [`Wide`] keeps an `f64` mantissa with an unbounded binary exponent, so the
//! moments `e^{2k(k-1)/σ²}` stay representable for small σ and large orders.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub};

use num_traits::{Float, One, Zero};

/// Arithmetic needed by the moment, remainder and bound routines.
pub trait Real:
    Copy
    + PartialOrd
    + fmt::Debug
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Send
    + Sync
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    /// `e^x` for an `f64` exponent.
    fn exp_of(x: f64) -> Self;
    /// Natural logarithm, returned as `f64` (always representable).
    fn ln_f64(self) -> f64;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    fn is_finite(self) -> bool;

    fn powi(self, n: u32) -> Self {
        let mut base = self;
        let mut acc = Self::one();
        let mut n = n;
        while n > 0 {
            if n & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            n >>= 1;
        }
        acc
    }

    fn is_negative(self) -> bool {
        self < Self::zero()
    }
}

impl<T> Real for T
where
    T: Float + fmt::Debug + Send + Sync,
{
    fn from_f64(x: f64) -> Self {
        T::from(x).unwrap_or_else(T::nan)
    }

    fn to_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    fn exp_of(x: f64) -> Self {
        Self::from_f64(x).exp()
    }

    fn ln_f64(self) -> f64 {
        Float::ln(self).to_f64()
    }

    fn sqrt(self) -> Self {
        Float::sqrt(self)
    }

    fn abs(self) -> Self {
        Float::abs(self)
    }

    fn is_finite(self) -> bool {
        Float::is_finite(self)
    }
}

#[allow(clippy::excessive_precision)]
const LN2_HI: f64 = 6.931_471_803_691_238_164_90e-01;
#[allow(clippy::excessive_precision)]
const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;

/// Extended-range float: `mant * 2^exp` with `0.5 <= |mant| < 1`
/// (or `mant == 0`, or a non-finite `mant`).
#[derive(Clone, Copy, Debug)]
pub struct Wide {
    mant: f64,
    exp: i64,
}

/// Splits a finite non-zero `f64` into `(m, e)` with `0.5 <= |m| < 1`.
fn frexp(x: f64) -> (f64, i64) {
    let bits = x.to_bits();
    let raw = ((bits >> 52) & 0x7ff) as i64;
    if raw == 0 {
        // subnormal: rescale by 2^64 first
        let (m, e) = frexp(x * f64::from_bits(0x43f0_0000_0000_0000));
        return (m, e - 64);
    }
    let m = f64::from_bits((bits & !(0x7ff << 52)) | (1022 << 52));
    (m, raw - 1022)
}

/// `2^n` for `-1022 <= n <= 1023`.
fn pow2(n: i64) -> f64 {
    debug_assert!((-1022..=1023).contains(&n));
    f64::from_bits(((n + 1023) as u64) << 52)
}

/// `x * 2^n` without intermediate overflow, flushing to zero/inf at the ends.
fn ldexp(mut x: f64, mut n: i64) -> f64 {
    while n > 1000 {
        x *= pow2(1000);
        n -= 1000;
        if x.is_infinite() {
            return x;
        }
    }
    while n < -1000 {
        x *= pow2(-1000);
        n += 1000;
        if x == 0.0 {
            return x;
        }
    }
    x * pow2(n)
}

impl Wide {
    pub const ZERO: Wide = Wide { mant: 0.0, exp: 0 };

    fn normalized(mant: f64, exp: i64) -> Wide {
        if mant == 0.0 || !mant.is_finite() {
            return Wide { mant, exp: 0 };
        }
        let (m, e) = frexp(mant);
        Wide { mant: m, exp: exp + e }
    }

    /// Mantissa and binary exponent, `self = mantissa * 2^exponent`.
    pub fn parts(self) -> (f64, i64) {
        (self.mant, self.exp)
    }
}

impl From<f64> for Wide {
    fn from(x: f64) -> Self {
        Wide::normalized(x, 0)
    }
}

impl PartialEq for Wide {
    fn eq(&self, other: &Self) -> bool {
        self.partial_cmp(other) == Some(Ordering::Equal)
    }
}

impl PartialOrd for Wide {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        if self.mant.is_nan() || other.mant.is_nan() {
            return None;
        }
        let sign = |w: &Wide| if w.mant == 0.0 { 0.0 } else { w.mant.signum() };
        let (sa, sb) = (sign(self), sign(other));
        if sa != sb || sa == 0.0 {
            return sa.partial_cmp(&sb);
        }
        let by_magnitude = if self.mant.is_finite() && other.mant.is_finite() {
            self.exp
                .cmp(&other.exp)
                .then(self.mant.abs().partial_cmp(&other.mant.abs())?)
        } else {
            self.mant.abs().is_infinite().cmp(&other.mant.abs().is_infinite())
        };
        Some(if sa > 0.0 { by_magnitude } else { by_magnitude.reverse() })
    }
}

impl Add for Wide {
    type Output = Wide;

    fn add(self, rhs: Wide) -> Wide {
        if !self.mant.is_finite() || !rhs.mant.is_finite() {
            return Wide::from(self.mant + rhs.mant);
        }
        if self.mant == 0.0 {
            return rhs;
        }
        if rhs.mant == 0.0 {
            return self;
        }
        let (big, small) = if self.exp >= rhs.exp { (self, rhs) } else { (rhs, self) };
        let shift = big.exp - small.exp;
        if shift > 1100 {
            return big;
        }
        Wide::normalized(big.mant + ldexp(small.mant, -shift), big.exp)
    }
}

impl AddAssign for Wide {
    fn add_assign(&mut self, rhs: Wide) {
        *self = *self + rhs;
    }
}

impl Sub for Wide {
    type Output = Wide;

    fn sub(self, rhs: Wide) -> Wide {
        self + (-rhs)
    }
}

impl Neg for Wide {
    type Output = Wide;

    fn neg(self) -> Wide {
        Wide { mant: -self.mant, exp: self.exp }
    }
}

impl Mul for Wide {
    type Output = Wide;

    fn mul(self, rhs: Wide) -> Wide {
        if !self.mant.is_finite() || !rhs.mant.is_finite() {
            return Wide::from(self.mant * rhs.mant);
        }
        Wide::normalized(self.mant * rhs.mant, self.exp + rhs.exp)
    }
}

impl MulAssign for Wide {
    fn mul_assign(&mut self, rhs: Wide) {
        *self = *self * rhs;
    }
}

impl Div for Wide {
    type Output = Wide;

    fn div(self, rhs: Wide) -> Wide {
        if !self.mant.is_finite() || !rhs.mant.is_finite() || rhs.mant == 0.0 {
            return Wide::from(self.mant / rhs.mant);
        }
        Wide::normalized(self.mant / rhs.mant, self.exp - rhs.exp)
    }
}

impl Zero for Wide {
    fn zero() -> Self {
        Wide::ZERO
    }

    fn is_zero(&self) -> bool {
        self.mant == 0.0
    }
}

impl One for Wide {
    fn one() -> Self {
        Wide { mant: 0.5, exp: 1 }
    }
}

impl Real for Wide {
    fn from_f64(x: f64) -> Self {
        Wide::from(x)
    }

    fn to_f64(self) -> f64 {
        if self.mant == 0.0 || !self.mant.is_finite() {
            return self.mant;
        }
        ldexp(self.mant, self.exp)
    }

    fn exp_of(x: f64) -> Self {
        if x.is_nan() {
            return Wide::from(f64::NAN);
        }
        if x == f64::INFINITY {
            return Wide::from(f64::INFINITY);
        }
        if x == f64::NEG_INFINITY {
            return Wide::ZERO;
        }
        let k = (x / std::f64::consts::LN_2).floor();
        let r = (x - k * LN2_HI) - k * LN2_LO;
        Wide::normalized(r.exp(), k as i64)
    }

    fn ln_f64(self) -> f64 {
        if self.mant <= 0.0 || !self.mant.is_finite() {
            return self.mant.ln();
        }
        self.mant.ln() + self.exp as f64 * std::f64::consts::LN_2
    }

    fn sqrt(self) -> Self {
        if self.mant <= 0.0 || !self.mant.is_finite() {
            return Wide::from(self.mant.sqrt());
        }
        if self.exp % 2 == 0 {
            Wide::normalized(self.mant.sqrt(), self.exp / 2)
        } else {
            Wide::normalized((2.0 * self.mant).sqrt(), (self.exp - 1) / 2)
        }
    }

    fn abs(self) -> Self {
        Wide { mant: self.mant.abs(), exp: self.exp }
    }

    fn is_finite(self) -> bool {
        self.mant.is_finite()
    }
}

impl fmt::Display for Wide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.to_f64();
        if v.is_finite() && (v == 0.0 || v.abs() > 1e-300) || !self.mant.is_finite() {
            return match f.precision() {
                Some(p) => write!(f, "{v:.p$e}"),
                None => write!(f, "{v:e}"),
            };
        }
        // decimal mantissa/exponent from the natural log
        let log10 = self.abs().ln_f64() / std::f64::consts::LN_10;
        let mut e10 = log10.floor();
        let mut m10 = 10f64.powf(log10 - e10);
        if let Some(p) = f.precision() {
            // rounding may carry into a second integer digit
            m10 = format!("{m10:.p$}").parse().unwrap_or(m10);
        }
        if m10 >= 10.0 {
            m10 /= 10.0;
            e10 += 1.0;
        }
        let m10 = m10 * self.mant.signum();
        match f.precision() {
            Some(p) => write!(f, "{m10:.p$}e{e10}"),
            None => write!(f, "{m10}e{e10}"),
        }
    }
}
