//! Exact rational arithmetic and the mod-1 primitives that every other
//! module builds on: floor, fractional part, the sawtooth `psi`, and the
//! distance to the nearest integer.
//!
//! All values are arbitrary-precision fractions kept in canonical form
//! (positive denominator, fully reduced), so floor and nearest-integer
//! decisions are never subject to rounding. Irrational parameters must be
//! supplied as rational approximants; every downstream quantity is then
//! exact for the approximant.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// An exact rational number.
///
/// Canonical form is an invariant, not a convention: the denominator is
/// always positive and `gcd(|num|, den) = 1` after every operation, so
/// structural equality is value equality.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rat(BigRational);

/// Error produced when parsing a [`Rat`] from text.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseRatError {
    #[error("empty rational literal")]
    Empty,
    #[error("invalid rational literal {0:?}")]
    Invalid(String),
    #[error("zero denominator in rational literal {0:?}")]
    ZeroDenominator(String),
}

impl Rat {
    /// Builds `num/den` in canonical form.
    ///
    /// Panics if `den` is zero; fallible construction goes through the
    /// string parser instead.
    pub fn new(num: impl Into<BigInt>, den: impl Into<BigInt>) -> Self {
        let den = den.into();
        assert!(!den.is_zero(), "Rat denominator must be nonzero");
        Rat(BigRational::new(num.into(), den))
    }

    pub fn from_int(n: impl Into<BigInt>) -> Self {
        Rat(BigRational::from_integer(n.into()))
    }

    pub fn zero() -> Self {
        Rat(BigRational::zero())
    }

    pub fn one() -> Self {
        Rat(BigRational::one())
    }

    pub fn one_half() -> Self {
        Rat::new(1, 2)
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn abs(&self) -> Rat {
        Rat(self.0.abs())
    }

    /// Multiplicative inverse. Panics on zero.
    pub fn recip(&self) -> Rat {
        assert!(!self.is_zero(), "Rat::recip of zero");
        Rat(self.0.recip())
    }

    /// The unique integer `n` with `n <= x < n+1`.
    pub fn floor_int(&self) -> BigInt {
        self.numer().div_floor(self.denom())
    }

    /// Fractional part `x - floor(x)`, always in `[0, 1)`.
    pub fn frac(&self) -> Rat {
        self - &Rat::from_int(self.floor_int())
    }

    /// The sawtooth `psi(x) = {x} - 1/2`, in `[-1/2, 1/2)`.
    pub fn psi(&self) -> Rat {
        self.frac() - Rat::one_half()
    }

    /// Distance to the nearest integer `min({x}, 1 - {x})`, in `[0, 1/2]`.
    pub fn dist_nearest_int(&self) -> Rat {
        let f = self.frac();
        let g = Rat::one() - &f;
        if f <= g {
            f
        } else {
            g
        }
    }

    /// Rounds to the nearest `f64`, correct to within a couple of ulps even
    /// when numerator and denominator are far outside the `f64` range.
    pub fn to_f64(&self) -> f64 {
        big_ratio_to_f64(self.numer(), self.denom())
    }
}

/// `n/d` as `f64` for exact big integers, `d > 0`.
///
/// Scales the quotient to ~55 significant bits before converting, so the
/// result is within 2 ulps regardless of operand size. Values outside the
/// `f64` range saturate to `inf`/`0`.
pub(crate) fn big_ratio_to_f64(n: &BigInt, d: &BigInt) -> f64 {
    debug_assert!(d.is_positive());
    if n.is_zero() {
        return 0.0;
    }
    let sign = if n.sign() == Sign::Minus { -1.0 } else { 1.0 };
    let num: &BigUint = n.magnitude();
    let den: &BigUint = d.magnitude();
    let shift: i64 = 55 + den.bits() as i64 - num.bits() as i64;
    let q = if shift >= 0 {
        (num << shift as u64) / den
    } else {
        num / (den << (-shift) as u64)
    };
    let q = q.to_f64().unwrap_or(f64::INFINITY);
    if shift >= 0 {
        sign * q * 0.5f64.powi(shift.min(2098) as i32)
    } else {
        sign * q * 2.0f64.powi((-shift).min(2098) as i32)
    }
}

impl fmt::Display for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.numer())
        } else {
            write!(f, "{}/{}", self.numer(), self.denom())
        }
    }
}

impl fmt::Debug for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl FromStr for Rat {
    type Err = ParseRatError;

    /// Accepts `num/den`, plain integers, and decimal literals; decimals
    /// convert exactly (`"0.25"` is `1/4`).
    fn from_str(s: &str) -> Result<Self, ParseRatError> {
        let t = s.trim();
        if t.is_empty() {
            return Err(ParseRatError::Empty);
        }
        if let Some((n, d)) = t.split_once('/') {
            let num = parse_bigint(n.trim(), s)?;
            let den = parse_bigint(d.trim(), s)?;
            if den.is_zero() {
                return Err(ParseRatError::ZeroDenominator(s.to_string()));
            }
            return Ok(Rat(BigRational::new(num, den)));
        }
        if let Some((int_part, frac_part)) = t.split_once('.') {
            let (neg, int_digits) = split_sign(int_part);
            if !int_digits.bytes().all(|b| b.is_ascii_digit())
                || !frac_part.bytes().all(|b| b.is_ascii_digit())
                || (int_digits.is_empty() && frac_part.is_empty())
            {
                return Err(ParseRatError::Invalid(s.to_string()));
            }
            let mut digits = String::from(int_digits);
            digits.push_str(frac_part);
            let mut num: BigInt = digits
                .parse()
                .map_err(|_| ParseRatError::Invalid(s.to_string()))?;
            if neg {
                num = -num;
            }
            let den = BigInt::from(10u32).pow(frac_part.len() as u32);
            return Ok(Rat(BigRational::new(num, den)));
        }
        Ok(Rat::from_int(parse_bigint(t, s)?))
    }
}

fn split_sign(s: &str) -> (bool, &str) {
    if let Some(rest) = s.strip_prefix('-') {
        (true, rest)
    } else if let Some(rest) = s.strip_prefix('+') {
        (false, rest)
    } else {
        (false, s)
    }
}

fn parse_bigint(part: &str, whole: &str) -> Result<BigInt, ParseRatError> {
    if part.is_empty() {
        return Err(ParseRatError::Invalid(whole.to_string()));
    }
    part.parse()
        .map_err(|_| ParseRatError::Invalid(whole.to_string()))
}

macro_rules! forward_binop {
    ($imp:ident, $method:ident) => {
        impl $imp<Rat> for Rat {
            type Output = Rat;
            fn $method(self, rhs: Rat) -> Rat {
                Rat(self.0.$method(rhs.0))
            }
        }
        impl $imp<&Rat> for Rat {
            type Output = Rat;
            fn $method(self, rhs: &Rat) -> Rat {
                Rat(self.0.$method(&rhs.0))
            }
        }
        impl $imp<Rat> for &Rat {
            type Output = Rat;
            fn $method(self, rhs: Rat) -> Rat {
                Rat((&self.0).$method(rhs.0))
            }
        }
        impl $imp<&Rat> for &Rat {
            type Output = Rat;
            fn $method(self, rhs: &Rat) -> Rat {
                Rat((&self.0).$method(&rhs.0))
            }
        }
    };
}

forward_binop!(Add, add);
forward_binop!(Sub, sub);
forward_binop!(Mul, mul);
forward_binop!(Div, div);

impl Neg for Rat {
    type Output = Rat;
    fn neg(self) -> Rat {
        Rat(-self.0)
    }
}

impl Neg for &Rat {
    type Output = Rat;
    fn neg(self) -> Rat {
        Rat(-&self.0)
    }
}

impl From<i64> for Rat {
    fn from(n: i64) -> Self {
        Rat::from_int(n)
    }
}

impl From<u64> for Rat {
    fn from(n: u64) -> Self {
        Rat::from_int(BigInt::from(n))
    }
}

impl From<i32> for Rat {
    fn from(n: i32) -> Self {
        Rat::from_int(n)
    }
}

impl Serialize for Rat {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Rat {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
