//! Numeric scalars shared by the exact and floating code paths.

use std::fmt::Debug;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Relative slack used by `f64` comparisons.
pub const FLOAT_RTOL: f64 = 1e-12;

/// Relative slack when a float cumulative mass is tested against a threshold.
/// Masses summed over many cells carry rounding, and thresholds often sit
/// exactly on a level-set mass.
pub const MASS_RTOL: f64 = 1e-10;

/// A totally ordered field element: `f64` or an exact rational.
pub trait Scalar: Num + Signed + Clone + PartialOrd + FromPrimitive + ToPrimitive + Debug + Send + Sync {
    /// True for exact arithmetic.
    const EXACT: bool;

    /// `self <= other`, up to [`FLOAT_RTOL`] for floats.
    fn approx_le(&self, other: &Self) -> bool;

    /// Equality, up to [`FLOAT_RTOL`] for floats.
    fn approx_eq(&self, other: &Self) -> bool {
        self.approx_le(other) && other.approx_le(self)
    }

    /// Rejects NaN and infinities.
    fn is_finite_value(&self) -> bool;

    /// Cumulative mass `self` has reached threshold `t` (relative
    /// [`MASS_RTOL`] for floats, exact otherwise).
    fn mass_reaches(&self, t: &Self) -> bool;

    fn from_ratio(num: i64, den: i64) -> Self;

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Parses `"p/q"`, integers and decimal literals.
    fn parse_scalar(s: &str) -> Result<Self>;
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn approx_le(&self, other: &Self) -> bool {
        let scale = self.abs().max(other.abs()).max(1.0);
        *self <= *other + FLOAT_RTOL * scale
    }

    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }

    fn mass_reaches(&self, t: &Self) -> bool {
        *self >= *t - MASS_RTOL * t.abs()
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }

    fn parse_scalar(s: &str) -> Result<Self> {
        let r = parse_rational(s)?;
        r.to_f64().ok_or_else(|| Error::Parse(format!("`{s}` is not representable as f64")))
    }
}

impl Scalar for BigRational {
    const EXACT: bool = true;

    fn approx_le(&self, other: &Self) -> bool {
        self <= other
    }

    fn is_finite_value(&self) -> bool {
        true
    }

    fn mass_reaches(&self, t: &Self) -> bool {
        self >= t
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn parse_scalar(s: &str) -> Result<Self> {
        parse_rational(s)
    }
}

/// Parses `"p/q"`, `"p"` or a decimal literal such as `"-0.125"` exactly.
pub fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let bad = || Error::Parse(format!("cannot parse `{s}` as a rational"));
    if let Some((p, q)) = s.split_once('/') {
        let p = BigInt::from_str(p.trim()).map_err(|_| bad())?;
        let q = BigInt::from_str(q.trim()).map_err(|_| bad())?;
        if q.is_zero() {
            return Err(Error::Parse(format!("zero denominator in `{s}`")));
        }
        return Ok(BigRational::new(p, q));
    }
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (neg, body) = match mantissa.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() {
        return Err(bad());
    }
    let digits = format!("{int}{frac}");
    if !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let mut value = BigRational::from_integer(BigInt::from_str(&digits).map_err(|_| bad())?);
    let shift = exp - frac.len() as i32;
    let ten = BigRational::from_integer(BigInt::from(10));
    for _ in 0..shift.unsigned_abs() {
        if shift > 0 {
            value *= ten.clone();
        } else {
            value /= ten.clone();
        }
    }
    Ok(if neg { -value } else { value })
}

/// Exact rational equal to a finite `f64`.
pub fn rational_from_f64(x: f64) -> Result<BigRational> {
    BigRational::from_float(x).ok_or_else(|| Error::Domain(format!("{x} is not finite")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fractions_and_decimals() {
        assert_eq!(parse_rational("3/9").unwrap(), <BigRational as Scalar>::from_ratio(1, 3));
        assert_eq!(parse_rational("-0.125").unwrap(), <BigRational as Scalar>::from_ratio(-1, 8));
        assert_eq!(parse_rational("25e-2").unwrap(), <BigRational as Scalar>::from_ratio(1, 4));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
        assert!((f64::parse_scalar("1/3").unwrap() - 1.0 / 3.0).abs() < 1e-16);
    }

    #[test]
    fn float_slack_is_relative() {
        assert!(1e6f64.approx_le(&(1e6 - 1e-7)));
        assert!(!1.0f64.approx_le(&0.999));
        assert!(1.0f64.approx_eq(&(1.0 + 1e-14)));
    }
}
