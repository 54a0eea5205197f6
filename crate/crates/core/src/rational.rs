//! Exact rational arithmetic helpers.
//!
//! Hyperparameters are arbitrary-precision rationals kept in lowest terms so
//! that priors like `1/12` survive any number of pooling steps without drift.
//! Floating point is used only at the score boundary (`log Gamma`) and for
//! decimal display.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};

use crate::error::Error;
use crate::Result;

/// Exact rational used for all prior/posterior mass.
pub type Rat = BigRational;

/// Rational from an integer.
pub fn rat(n: i64) -> Rat {
    BigRational::from_integer(BigInt::from(n))
}

/// Rational from a numerator/denominator pair.
pub fn ratio(n: i64, d: i64) -> Rat {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Parse `"3"`, `"3/4"` or `"-1/2"` into a rational.
pub fn parse_rat(s: &str) -> Result<Rat> {
    let s = s.trim();
    let build = |n: &str, d: &str| -> Option<Rat> {
        let numer: BigInt = n.parse().ok()?;
        let denom: BigInt = d.parse().ok()?;
        if denom.is_zero() {
            return None;
        }
        Some(BigRational::new(numer, denom))
    };
    let parsed = match s.split_once('/') {
        Some((n, d)) => build(n.trim(), d.trim()),
        None => build(s, "1"),
    };
    parsed.ok_or_else(|| Error::validation(format!("cannot parse rational from {s:?}")))
}

/// Canonical string form: `"4"` for integers, `"1/6"` otherwise.
pub fn format_rat(r: &Rat) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Lossy conversion for score evaluation and display.
pub fn rat_to_f64(r: &Rat) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Fixed-precision decimal rendering, e.g. `0.04` for `1/25` at 2 places.
pub fn rat_to_decimal(r: &Rat, places: usize) -> String {
    format!("{:.*}", places, rat_to_f64(r))
}

/// Require a strictly positive value, reporting `what` on failure.
pub fn ensure_positive(r: &Rat, what: &str) -> Result<()> {
    if r.is_positive() {
        Ok(())
    } else {
        Err(Error::validation(format!(
            "{what} must be positive, got {}",
            format_rat(r)
        )))
    }
}

/// Serde adaptor: rationals as canonical strings in JSON.
pub mod serde_rat {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rat, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.serialize_str(&format_rat(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<Rat, D::Error> {
        let s = String::deserialize(de)?;
        parse_rat(&s).map_err(serde::de::Error::custom)
    }
}

/// Serde adaptor for vectors of rationals.
pub mod serde_rat_vec {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Rat], ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.collect_seq(v.iter().map(format_rat))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        de: D,
    ) -> std::result::Result<Vec<Rat>, D::Error> {
        let strings = Vec::<String>::deserialize(de)?;
        strings
            .iter()
            .map(|s| parse_rat(s).map_err(serde::de::Error::custom))
            .collect()
    }
}
