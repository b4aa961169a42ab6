//! Scalars that are either exact rationals or plain floats.
//!
//! Radii (`λ²`, `k²`) go through the floor in the bound, so a value that sits
//! on a step boundary must be represented exactly to land on the right step.

use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Decimals with at most this many significant digits parse as exact rationals.
pub const MAX_EXACT_DIGITS: usize = 15;

#[derive(Debug, Clone, PartialEq)]
pub enum Quantity {
    Exact(BigRational),
    Float(f64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseQuantityError(pub String);

impl fmt::Display for ParseQuantityError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cannot parse `{}` as a number or p/q rational", self.0)
    }
}

impl core::error::Error for ParseQuantityError {}

impl Quantity {
    pub fn ratio(numer: i64, denom: i64) -> Quantity {
        Quantity::Exact(BigRational::new(BigInt::from(numer), BigInt::from(denom)))
    }

    pub fn integer(value: i64) -> Quantity {
        Quantity::Exact(BigRational::from_integer(BigInt::from(value)))
    }

    /// The exact rational value of a finite float (every finite `f64` is one).
    pub fn exact_from_f64(value: f64) -> Option<Quantity> {
        BigRational::from_float(value).map(Quantity::Exact)
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Quantity::Exact(_))
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Quantity::Exact(r) => r.to_f64().unwrap_or(f64::NAN),
            Quantity::Float(x) => *x,
        }
    }

    /// Positive and (for floats) finite.
    pub fn is_positive(&self) -> bool {
        match self {
            Quantity::Exact(r) => r.is_positive(),
            Quantity::Float(x) => x.is_finite() && *x > 0.0,
        }
    }

    pub fn square(&self) -> Quantity {
        match self {
            Quantity::Exact(r) => Quantity::Exact(r * r),
            Quantity::Float(x) => Quantity::Float(x * x),
        }
    }

    /// Same value on the exact path; a float is converted without rounding.
    pub fn to_exact(&self) -> Option<BigRational> {
        match self {
            Quantity::Exact(r) => Some(r.clone()),
            Quantity::Float(x) => BigRational::from_float(*x),
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Quantity::Exact(r) if r.denom().is_one() => write!(f, "{}", r.numer()),
            Quantity::Exact(r) => write!(f, "{}/{}", r.numer(), r.denom()),
            Quantity::Float(x) => write!(f, "{x:?}"),
        }
    }
}

impl FromStr for Quantity {
    type Err = ParseQuantityError;

    /// Accepts `p/q`, plain decimals and scientific notation. Decimals with at
    /// most [`MAX_EXACT_DIGITS`] significant digits become exact rationals;
    /// longer ones fall back to `f64`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseQuantityError(s.into());
        let s = s.trim();
        if let Some((p, q)) = s.split_once('/') {
            let p = parse_decimal(p.trim()).ok_or_else(err)?;
            let q = parse_decimal(q.trim()).ok_or_else(err)?;
            if q.0.is_zero() {
                return Err(err());
            }
            return Ok(Quantity::Exact(p.0 / q.0));
        }
        let (value, digits) = parse_decimal(s).ok_or_else(err)?;
        if digits <= MAX_EXACT_DIGITS {
            Ok(Quantity::Exact(value))
        } else {
            let x: f64 = s.parse().map_err(|_| err())?;
            Ok(Quantity::Float(x))
        }
    }
}

/// Parses `[+-]digits[.digits][e[+-]digits]` exactly, returning the value and
/// its number of significant digits.
fn parse_decimal(s: &str) -> Option<(BigRational, usize)> {
    let (negative, body) = match s.as_bytes().first()? {
        b'-' => (true, &s[1..]),
        b'+' => (false, &s[1..]),
        _ => (false, s),
    };
    let (mantissa, exponent) = match body.find(['e', 'E']) {
        Some(pos) => (&body[..pos], body[pos + 1..].parse::<i32>().ok()?),
        None => (body, 0),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    let all_digits = int_part.bytes().chain(frac_part.bytes());
    if !all_digits.clone().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let digits: String = all_digits.map(char::from).collect();
    let significant = digits.trim_start_matches('0').trim_end_matches('0').len();
    let mut numer: BigInt = if digits.is_empty() { BigInt::zero() } else { digits.parse().ok()? };
    if negative {
        numer = -numer;
    }
    let scale = exponent.checked_sub(i32::try_from(frac_part.len()).ok()?)?;
    if scale.unsigned_abs() > 4096 {
        return None;
    }
    let ten_pow = num_traits::pow(BigInt::from(10u8), scale.unsigned_abs() as usize);
    let value = if scale >= 0 {
        BigRational::from_integer(numer * ten_pow)
    } else {
        BigRational::new(numer, ten_pow)
    };
    Some((value, significant))
}

/// `⌊r⌋` for a rational.
pub(crate) fn floor_int(r: &BigRational) -> BigInt {
    r.numer().div_floor(r.denom())
}
