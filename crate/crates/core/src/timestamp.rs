use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const MIN_YEAR: i32 = 1970;
pub const MAX_YEAR: i32 = 2100;

/// A calendar month. Ordered by `(year, month)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp {
    year: i32,
    month: u32,
}

impl Timestamp {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::Config(format!("month {month} outside 1..=12")));
        }
        if !(MIN_YEAR..=MAX_YEAR).contains(&year) {
            return Err(Error::Config(format!(
                "year {year} outside {MIN_YEAR}..={MAX_YEAR}"
            )));
        }
        Ok(Timestamp { year, month })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn month(self) -> u32 {
        self.month
    }

    /// Months since January 1970.
    pub fn month_index(self) -> i64 {
        (self.year - MIN_YEAR) as i64 * 12 + (self.month as i64 - 1)
    }

    pub fn from_month_index(index: i64) -> Result<Self> {
        let year = MIN_YEAR as i64 + index.div_euclid(12);
        let month = index.rem_euclid(12) + 1;
        let year = i32::try_from(year).map_err(|_| Error::Config(format!("month index {index} out of range")))?;
        Timestamp::new(year, month as u32)
    }

    /// Shift by a signed number of months.
    pub fn add_months(self, months: i64) -> Result<Self> {
        Timestamp::from_month_index(self.month_index() + months)
    }

    /// Every month from `start` to `end`, both inclusive.
    pub fn range_inclusive(start: Timestamp, end: Timestamp) -> Vec<Timestamp> {
        (start.month_index()..=end.month_index())
            .map(|i| Timestamp::from_month_index(i).expect("inside validated bounds"))
            .collect()
    }
}

/// `12·(y2−y1) + (m2−m1)`; negative when `t2` precedes `t1`.
pub fn months_between(t1: Timestamp, t2: Timestamp) -> i64 {
    12 * (t2.year as i64 - t1.year as i64) + (t2.month as i64 - t1.month as i64)
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for Timestamp {
    type Err = Error;

    /// Parses `YYYY-MM`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("invalid timestamp `{s}`, expected YYYY-MM"));
        let (y, m) = s.trim().split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(bad());
        }
        let year = y.parse().map_err(|_| bad())?;
        let month = m.parse().map_err(|_| bad())?;
        Timestamp::new(year, month)
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ts(y: i32, m: u32) -> Timestamp {
        Timestamp::new(y, m).unwrap()
    }

    #[test]
    fn months_between_examples() {
        assert_eq!(months_between(ts(2018, 3), ts(2018, 6)), 3);
        assert_eq!(months_between(ts(2018, 12), ts(2019, 1)), 1);
        assert_eq!(months_between(ts(2020, 5), ts(2020, 5)), 0);
        assert_eq!(months_between(ts(2018, 6), ts(2018, 3)), -3);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(Timestamp::new(2018, 0).is_err());
        assert!(Timestamp::new(2018, 13).is_err());
        assert!(Timestamp::new(1969, 12).is_err());
        assert!(Timestamp::new(2101, 1).is_err());
    }

    #[test]
    fn parse_and_display() {
        let t: Timestamp = "2019-01".parse().unwrap();
        assert_eq!(t, ts(2019, 1));
        assert_eq!(t.to_string(), "2019-01");
        assert!("2019-1".parse::<Timestamp>().is_err());
        assert!("2019/01".parse::<Timestamp>().is_err());
    }

    #[test]
    fn inclusive_ranges() {
        assert_eq!(Timestamp::range_inclusive(ts(2018, 1), ts(2021, 3)).len(), 39);
        assert_eq!(Timestamp::range_inclusive(ts(2016, 1), ts(2019, 1)).len(), 37);
    }

    fn any_ts() -> impl Strategy<Value = Timestamp> {
        (MIN_YEAR..=MAX_YEAR, 1u32..=12).prop_map(|(y, m)| ts(y, m))
    }

    proptest! {
        #[test]
        fn antisymmetric(a in any_ts(), b in any_ts()) {
            prop_assert_eq!(months_between(a, b), -months_between(b, a));
        }

        #[test]
        fn ordering_matches_sign(a in any_ts(), b in any_ts()) {
            prop_assert_eq!(a.cmp(&b), months_between(b, a).cmp(&0));
        }

        #[test]
        fn month_index_roundtrip(a in any_ts()) {
            prop_assert_eq!(Timestamp::from_month_index(a.month_index()).unwrap(), a);
        }
    }
}
