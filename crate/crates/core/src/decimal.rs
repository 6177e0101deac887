//! Decimal numbers carried as their exact source text.
//!
//! Sensor values, validity bounds and published statistics are stored as
//! decimal strings so every implementation hashes the same bytes. Ordering is
//! exact on the decimal value; arithmetic goes through `f64` after parsing.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("not a plain decimal number: {0:?}")]
pub struct ParseDecimalError(pub String);

/// A finite decimal of the form `-?[0-9]+(.[0-9]+)?`, kept verbatim.
#[derive(Clone)]
pub struct Decimal(String);

impl Decimal {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Nearest `f64` (the standard library parser rounds correctly).
    pub fn to_f64(&self) -> f64 {
        self.0.parse().expect("validated decimal")
    }

    /// Formats an `f64` using the shortest text that round-trips.
    pub fn from_f64(value: f64) -> Option<Self> {
        if !value.is_finite() {
            return None;
        }
        // `Display` for f64 never uses exponent notation.
        Some(Decimal(format!("{value}")))
    }

    /// The value scaled by `10^places`, if exactly representable as an integer.
    pub fn to_scaled(&self, places: u32) -> Option<i128> {
        let (neg, int, frac) = self.parts();
        let frac = frac.trim_end_matches('0');
        if frac.len() > places as usize {
            return None;
        }
        let mut digits = String::with_capacity(int.len() + places as usize);
        digits.push_str(int);
        digits.push_str(frac);
        for _ in frac.len()..places as usize {
            digits.push('0');
        }
        let magnitude: i128 = digits.parse().ok()?;
        Some(if neg { -magnitude } else { magnitude })
    }

    /// Inverse of [`Decimal::to_scaled`], always printing `places` fraction digits.
    pub fn from_scaled(value: i128, places: u32) -> Self {
        let neg = value < 0;
        let mut digits = value.unsigned_abs().to_string();
        let places = places as usize;
        if digits.len() <= places {
            digits = format!("{}{digits}", "0".repeat(places + 1 - digits.len()));
        }
        let (int, frac) = digits.split_at(digits.len() - places);
        let mut s = String::new();
        if neg {
            s.push('-');
        }
        s.push_str(int);
        if places > 0 {
            s.push('.');
            s.push_str(frac);
        }
        Decimal(s)
    }

    /// Exact multiplication by ten.
    pub fn times_ten(&self) -> Self {
        let (neg, int, frac) = self.parts();
        let (first, rest) = if frac.is_empty() { ("0", "") } else { frac.split_at(1) };
        let mut s = String::new();
        if neg {
            s.push('-');
        }
        let int = format!("{int}{first}");
        let int = int.trim_start_matches('0');
        s.push_str(if int.is_empty() { "0" } else { int });
        if !rest.is_empty() {
            s.push('.');
            s.push_str(rest);
        }
        Decimal(s)
    }

    fn parts(&self) -> (bool, &str, &str) {
        let (neg, body) = match self.0.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, self.0.as_str()),
        };
        match body.split_once('.') {
            Some((i, f)) => (neg, i, f),
            None => (neg, body, ""),
        }
    }

    /// Sign and normalized magnitude: no leading integer zeros, no trailing
    /// fraction zeros, zero is never negative.
    fn normalized(&self) -> (bool, &str, &str) {
        let (neg, int, frac) = self.parts();
        let int = int.trim_start_matches('0');
        let frac = frac.trim_end_matches('0');
        let zero = int.is_empty() && frac.is_empty();
        (neg && !zero, int, frac)
    }
}

impl FromStr for Decimal {
    type Err = ParseDecimalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let body = s.strip_prefix('-').unwrap_or(s);
        let (int, frac) = match body.split_once('.') {
            Some((i, f)) => (i, Some(f)),
            None => (body, None),
        };
        let digits = |t: &str| !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit());
        if digits(int) && frac.is_none_or(digits) {
            Ok(Decimal(s.to_owned()))
        } else {
            Err(ParseDecimalError(s.to_owned()))
        }
    }
}

impl Ord for Decimal {
    fn cmp(&self, other: &Self) -> Ordering {
        let (an, ai, af) = self.normalized();
        let (bn, bi, bf) = other.normalized();
        let magnitude = ai
            .len()
            .cmp(&bi.len())
            .then_with(|| ai.cmp(bi))
            .then_with(|| af.cmp(bf));
        match (an, bn) {
            (false, false) => magnitude,
            (true, true) => magnitude.reverse(),
            (false, true) => Ordering::Greater,
            (true, false) => Ordering::Less,
        }
    }
}

impl PartialOrd for Decimal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Decimal {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Decimal {}

impl fmt::Debug for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Decimal({})", self.0)
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for Decimal {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Decimal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Serde adapter storing an `f64` as a shortest round-trip decimal string.
pub(crate) mod f64_as_decimal {
    use super::Decimal;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(value: &f64, serializer: S) -> Result<S::Ok, S::Error> {
        Decimal::from_f64(*value)
            .ok_or_else(|| serde::ser::Error::custom("non-finite statistic"))?
            .serialize(serializer)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<f64, D::Error> {
        Ok(Decimal::deserialize(deserializer)?.to_f64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(s: &str) -> Decimal {
        s.parse().unwrap()
    }

    #[test]
    fn grammar() {
        for ok in ["0", "-0", "12", "12.50", "-3.0001", "007"] {
            assert!(ok.parse::<Decimal>().is_ok(), "{ok}");
        }
        for bad in ["", "-", "1.", ".5", "1e3", "NaN", "inf", "+1", "1.2.3", " 1"] {
            assert!(bad.parse::<Decimal>().is_err(), "{bad}");
        }
    }

    #[test]
    fn exact_ordering() {
        assert_eq!(d("60"), d("60.000"));
        assert_eq!(d("-0"), d("0.0"));
        assert!(d("-20") < d("-19.99"));
        assert!(d("59.9999999999999999999") < d("60"));
        assert!(d("0.5") < d("0.51"));
        assert!(d("100") > d("99.99"));
    }

    #[test]
    fn scaling() {
        assert_eq!(d("12.3").to_scaled(2), Some(1230));
        assert_eq!(d("-0.05").to_scaled(2), Some(-5));
        assert_eq!(d("1.234").to_scaled(2), None);
        assert_eq!(Decimal::from_scaled(1230, 2).as_str(), "12.30");
        assert_eq!(Decimal::from_scaled(-5, 2).as_str(), "-0.05");
        assert_eq!(Decimal::from_scaled(7, 0).as_str(), "7");
    }

    #[test]
    fn times_ten_is_exact() {
        assert_eq!(d("60").times_ten().as_str(), "600");
        assert_eq!(d("0.25").times_ten().as_str(), "2.5");
        assert_eq!(d("-1.5").times_ten().as_str(), "-15");
        assert_eq!(d("0.0").times_ten().as_str(), "0");
    }

    #[test]
    fn f64_text_round_trips() {
        for v in [20.0, 8.16496580927726, -0.1, 1e-12, 123456789.125] {
            let text = Decimal::from_f64(v).unwrap();
            assert_eq!(text.to_f64(), v);
        }
        assert!(Decimal::from_f64(f64::NAN).is_none());
    }

    proptest! {
        #[test]
        fn order_agrees_with_scaled_integers(a in -10_000_000i64..10_000_000, b in -10_000_000i64..10_000_000) {
            let da = Decimal::from_scaled(a as i128, 3);
            let db = Decimal::from_scaled(b as i128, 3);
            prop_assert_eq!(da.cmp(&db), a.cmp(&b));
            prop_assert_eq!(da.to_scaled(3), Some(a as i128));
        }
    }
}
