//! Exact rational levels (quantiles, sparsity fractions).

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A nonnegative rational number such as a quantile level `q` or a
/// sparsity fraction `beta`. Integrality of `q * m` is checked exactly.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fraction(Ratio<u64>);

impl Fraction {
    pub const ZERO: Fraction = Fraction(Ratio::new_raw(0, 1));
    pub const ONE: Fraction = Fraction(Ratio::new_raw(1, 1));

    pub fn new(numer: u64, denom: u64) -> Result<Self> {
        if denom == 0 {
            return Err(Error::InvalidSpec("fraction with zero denominator".into()));
        }
        Ok(Fraction(Ratio::new(numer, denom)))
    }

    /// `count / m`, the level selecting exactly `count` of `m` items.
    pub fn of_count(count: usize, m: usize) -> Result<Self> {
        Self::new(count as u64, m as u64)
    }

    pub fn numer(&self) -> u64 {
        *self.0.numer()
    }

    pub fn denom(&self) -> u64 {
        *self.0.denom()
    }

    pub fn to_f64(self) -> f64 {
        self.numer() as f64 / self.denom() as f64
    }

    /// `self * m` if it is an integer.
    pub fn count(self, m: usize) -> Result<usize> {
        let scaled = self.0 * Ratio::from_integer(m as u64);
        if scaled.is_integer() {
            Ok(scaled.to_integer() as usize)
        } else {
            Err(Error::NonIntegerQuantile {
                q: self.to_string(),
                m,
            })
        }
    }

    /// Nearest level `k / m` to `value`, with `k` clamped to `[min_count, m]`.
    pub fn snap(value: f64, m: usize, min_count: usize) -> Result<Self> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::InvalidSpec(format!("level {value} must be finite and nonnegative")));
        }
        let k = ((value * m as f64).round() as usize).clamp(min_count, m);
        Self::of_count(k, m)
    }

    pub fn checked_sub(self, other: Fraction) -> Option<Fraction> {
        (self >= other).then(|| Fraction(self.0 - other.0))
    }

    pub fn checked_add(self, other: Fraction) -> Fraction {
        Fraction(self.0 + other.0)
    }

    pub fn checked_mul(self, other: Fraction) -> Fraction {
        Fraction(self.0 * other.0)
    }

    pub fn checked_div(self, other: Fraction) -> Option<Fraction> {
        (!other.is_zero()).then(|| Fraction(self.0 / other.0))
    }

    pub fn is_zero(&self) -> bool {
        self.numer() == 0
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denom() == 1 {
            write!(f, "{}", self.numer())
        } else {
            write!(f, "{}/{}", self.numer(), self.denom())
        }
    }
}

impl fmt::Debug for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fraction({self})")
    }
}

/// Accepts `a/b`, integers, and plain decimals such as `0.05` (parsed exactly).
impl FromStr for Fraction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidSpec(format!("cannot parse {s:?} as a fraction"));
        if let Some((n, d)) = s.split_once('/') {
            let n: u64 = n.trim().parse().map_err(|_| bad())?;
            let d: u64 = d.trim().parse().map_err(|_| bad())?;
            return Fraction::new(n, d);
        }
        let (int_part, frac_part) = s.split_once('.').unwrap_or((s, ""));
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        if frac_part.len() > 18 {
            return Err(bad());
        }
        let denom = 10u64.pow(frac_part.len() as u32);
        let int: u64 = if int_part.is_empty() { 0 } else { int_part.parse().map_err(|_| bad())? };
        let frac: u64 = if frac_part.is_empty() { 0 } else { frac_part.parse().map_err(|_| bad())? };
        let numer = int
            .checked_mul(denom)
            .and_then(|v| v.checked_add(frac))
            .ok_or_else(bad)?;
        Fraction::new(numer, denom)
    }
}

impl Serialize for Fraction {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Fraction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
