//! Simulated time.
//!
//! All time in the simulator is an integer count of nanoseconds. There are no
//! fractional ticks anywhere, which keeps every run bit-for-bit reproducible.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Sub};
use std::str::FromStr;

use thiserror::Error;

/// A non-negative span (or absolute instant) of simulated time in nanoseconds.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Duration(u64);

impl Duration {
    pub const ZERO: Duration = Duration(0);
    pub const MAX: Duration = Duration(u64::MAX);

    pub const fn from_nanos(ns: u64) -> Self {
        Duration(ns)
    }

    pub const fn from_micros(us: u64) -> Self {
        Duration(us * 1_000)
    }

    pub const fn from_millis(ms: u64) -> Self {
        Duration(ms * 1_000_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        Duration(s * 1_000_000_000)
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub const fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn checked_add(self, rhs: Duration) -> Option<Duration> {
        self.0.checked_add(rhs.0).map(Duration)
    }

    pub fn checked_sub(self, rhs: Duration) -> Option<Duration> {
        self.0.checked_sub(rhs.0).map(Duration)
    }

    pub fn saturating_sub(self, rhs: Duration) -> Duration {
        Duration(self.0.saturating_sub(rhs.0))
    }

    /// Signed difference `self - rhs` in nanoseconds.
    pub fn signed_diff(self, rhs: Duration) -> i64 {
        (self.0 as i128 - rhs.0 as i128) as i64
    }
}

impl Add for Duration {
    type Output = Duration;

    fn add(self, rhs: Duration) -> Duration {
        Duration(self.0 + rhs.0)
    }
}

impl AddAssign for Duration {
    fn add_assign(&mut self, rhs: Duration) {
        self.0 += rhs.0;
    }
}

impl Sub for Duration {
    type Output = Duration;

    fn sub(self, rhs: Duration) -> Duration {
        Duration(self.0 - rhs.0)
    }
}

impl Mul<u64> for Duration {
    type Output = Duration;

    fn mul(self, rhs: u64) -> Duration {
        Duration(self.0 * rhs)
    }
}

impl Sum for Duration {
    fn sum<I: Iterator<Item = Duration>>(iter: I) -> Duration {
        iter.fold(Duration::ZERO, Add::add)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DurationParseError {
    #[error("empty duration")]
    Empty,
    #[error("negative duration '{0}'")]
    Negative(String),
    #[error("missing or unknown unit in '{0}' (expected ns, us, ms or s)")]
    BadUnit(String),
    #[error("invalid number in '{0}'")]
    BadNumber(String),
    #[error("duration '{0}' overflows")]
    Overflow(String),
}

const UNITS: [(&str, u64); 4] = [
    ("ns", 1),
    ("us", 1_000),
    ("ms", 1_000_000),
    ("s", 1_000_000_000),
];

impl FromStr for Duration {
    type Err = DurationParseError;

    /// Parses `<integer><unit>` where unit is one of `ns`, `us`, `ms`, `s`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err(DurationParseError::Empty);
        }
        if s.starts_with('-') {
            return Err(DurationParseError::Negative(s.to_string()));
        }
        let split = s
            .find(|c: char| !c.is_ascii_digit())
            .ok_or_else(|| DurationParseError::BadUnit(s.to_string()))?;
        let (digits, unit) = s.split_at(split);
        let scale = UNITS
            .iter()
            .find(|(u, _)| *u == unit)
            .map(|(_, scale)| *scale)
            .ok_or_else(|| DurationParseError::BadUnit(s.to_string()))?;
        if digits.is_empty() {
            return Err(DurationParseError::BadNumber(s.to_string()));
        }
        let value: u64 = digits
            .parse()
            .map_err(|_| DurationParseError::Overflow(s.to_string()))?;
        value
            .checked_mul(scale)
            .map(Duration)
            .ok_or_else(|| DurationParseError::Overflow(s.to_string()))
    }
}

impl fmt::Display for Duration {
    /// Formats with the largest unit that represents the value exactly, so
    /// that `parse(format(d)) == d` always holds.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == 0 {
            return write!(f, "0ns");
        }
        for (unit, scale) in UNITS.iter().rev() {
            if self.0.is_multiple_of(*scale) {
                return write!(f, "{}{}", self.0 / scale, unit);
            }
        }
        unreachable!("ns always divides")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unit_table() {
        assert_eq!("400us".parse::<Duration>().unwrap().as_nanos(), 400_000);
        assert_eq!("1ms".parse::<Duration>().unwrap().as_nanos(), 1_000_000);
        assert_eq!("2s".parse::<Duration>().unwrap().as_nanos(), 2_000_000_000);
        assert_eq!("7ns".parse::<Duration>().unwrap().as_nanos(), 7);
        assert_eq!("0us".parse::<Duration>().unwrap(), Duration::ZERO);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            "-5us".parse::<Duration>(),
            Err(DurationParseError::Negative(_))
        ));
        assert!(matches!(
            "5".parse::<Duration>(),
            Err(DurationParseError::BadUnit(_))
        ));
        assert!(matches!(
            "5min".parse::<Duration>(),
            Err(DurationParseError::BadUnit(_))
        ));
        assert!(matches!(
            "us".parse::<Duration>(),
            Err(DurationParseError::BadNumber(_))
        ));
        assert!(matches!(
            "99999999999999999999s".parse::<Duration>(),
            Err(DurationParseError::Overflow(_))
        ));
        assert!(matches!(
            "".parse::<Duration>(),
            Err(DurationParseError::Empty)
        ));
    }

    #[test]
    fn display_picks_exact_unit() {
        assert_eq!(Duration::from_micros(400).to_string(), "400us");
        assert_eq!(Duration::from_micros(1000).to_string(), "1ms");
        assert_eq!(Duration::from_nanos(2100).to_string(), "2100ns");
        assert_eq!(Duration::ZERO.to_string(), "0ns");
    }

    proptest! {
        #[test]
        fn display_parse_round_trip(ns in any::<u64>()) {
            let d = Duration::from_nanos(ns);
            prop_assert_eq!(d.to_string().parse::<Duration>().unwrap(), d);
        }
    }
}
