//! Exact rational helpers.
//!
//! Metrics are accumulated as `BigRational` and only rounded when rendered,
//! so averages over thousands of queries stay exact.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Exact = BigRational;

pub fn ratio(numer: usize, denom: usize) -> Exact {
    BigRational::new(BigInt::from(numer), BigInt::from(denom))
}

pub fn zero() -> Exact {
    BigRational::zero()
}

pub fn one() -> Exact {
    BigRational::one()
}

/// Arithmetic mean; `None` for an empty input.
pub fn mean<'a, I>(values: I) -> Option<Exact>
where
    I: IntoIterator<Item = &'a Exact>,
{
    let mut sum = zero();
    let mut n = 0usize;
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / BigInt::from(n))
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1(precision: &Exact, recall: &Exact) -> Exact {
    let denom = precision + recall;
    if denom.is_zero() {
        zero()
    } else {
        (precision * recall * BigInt::from(2)) / denom
    }
}

/// Parses a plain decimal literal such as `42.42` or `-0.5` exactly.
pub fn parse_decimal(s: &str) -> Result<Exact> {
    let t = s.trim();
    let bad = || Error::validation(format!("not a decimal number: {s:?}"));
    let (neg, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: BigInt = if digits.is_empty() {
        BigInt::zero()
    } else {
        digits.parse().map_err(|_| bad())?
    };
    let denom = num_traits::pow(BigInt::from(10), frac_part.len());
    let value = BigRational::new(numer, denom);
    Ok(if neg { -value } else { value })
}

/// Renders `value` with exactly `places` decimals, rounding half away from zero.
pub fn round_decimal(value: &Exact, places: usize) -> String {
    let scale = num_traits::pow(BigInt::from(10), places);
    let scaled = value.abs() * BigRational::from_integer(scale.clone());
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let rounded = (scaled + half).floor().to_integer();
    let (int_part, frac_part) = rounded.div_rem(&scale);
    let sign = if value.is_negative() && !rounded.is_zero() {
        "-"
    } else {
        ""
    };
    if places == 0 {
        format!("{sign}{int_part}")
    } else {
        format!("{sign}{int_part}.{:0>width$}", frac_part.to_string(), width = places)
    }
}

pub fn to_f64(value: &Exact) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}

/// `p/q` form, or just `p` for integers.
pub fn to_fraction_string(value: &Exact) -> String {
    if value.denom().is_one() {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

pub fn parse_fraction(s: &str) -> Result<Exact> {
    let bad = || Error::validation(format!("not a fraction: {s:?}"));
    match s.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().map_err(|_| bad())?;
            let d: BigInt = d.trim().parse().map_err(|_| bad())?;
            if d.is_zero() {
                return Err(bad());
            }
            Ok(BigRational::new(n, d))
        }
        None => parse_decimal(s),
    }
}
