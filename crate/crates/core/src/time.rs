//! Calendar months, sale dates, and the monthly index grid.
//!
//! Indexes are estimated at monthly resolution. Everything downstream works
//! with month offsets into a [`TimeGrid`]; calendar parsing and validation
//! beyond year/month/day ranges is the IO layer's job.

use alloc::string::String;
use core::fmt;
use core::str::FromStr;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TimeError {
    #[error("month must be in 1..=12, got {0}")]
    InvalidMonth(u32),
    #[error("day must be in 1..=31, got {0}")]
    InvalidDay(u32),
    #[error("index window must cover at least 2 months, got {0}")]
    WindowTooShort(usize),
    #[error("cannot parse '{0}' as YYYY-MM")]
    ParseMonth(String),
}

/// A calendar month, the unit of time for all indexes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Month {
    year: i32,
    month: u8,
}

impl Month {
    pub fn new(year: i32, month: u32) -> Result<Self, TimeError> {
        if !(1..=12).contains(&month) {
            return Err(TimeError::InvalidMonth(month));
        }
        Ok(Month { year, month: month as u8 })
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn month(&self) -> u32 {
        u32::from(self.month)
    }

    /// Signed number of months from `origin` to `self`.
    pub fn months_since(&self, origin: Month) -> i64 {
        i64::from(self.year - origin.year) * 12 + i64::from(self.month) - i64::from(origin.month)
    }

    pub fn offset(&self, months: i64) -> Month {
        let total = i64::from(self.year) * 12 + i64::from(self.month) - 1 + months;
        Month {
            year: total.div_euclid(12) as i32,
            month: (total.rem_euclid(12) + 1) as u8,
        }
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for Month {
    type Err = TimeError;

    fn from_str(s: &str) -> Result<Self, TimeError> {
        let err = || TimeError::ParseMonth(String::from(s));
        let (y, m) = s.split_once('-').ok_or_else(err)?;
        let year: i32 = y.parse().map_err(|_| err())?;
        let month: u32 = m.parse().map_err(|_| err())?;
        Month::new(year, month)
    }
}

#[cfg(feature = "serde")]
impl serde::Serialize for Month {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[cfg(feature = "serde")]
impl<'de> serde::Deserialize<'de> for Month {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A calendar date. Ordering is lexicographic on (year, month, day); only a
/// shallow day-range check is done here, full calendar validation happens at
/// parse time in the IO layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Date {
    year: i32,
    month: u8,
    day: u8,
}

impl Date {
    pub fn new(year: i32, month: u32, day: u32) -> Result<Self, TimeError> {
        if !(1..=12).contains(&month) {
            return Err(TimeError::InvalidMonth(month));
        }
        if !(1..=31).contains(&day) {
            return Err(TimeError::InvalidDay(day));
        }
        Ok(Date { year, month: month as u8, day: day as u8 })
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn month(&self) -> u32 {
        u32::from(self.month)
    }

    pub fn day(&self) -> u32 {
        u32::from(self.day)
    }

    pub fn month_key(&self) -> Month {
        Month { year: self.year, month: self.month }
    }
}

impl fmt::Display for Date {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}-{:02}", self.year, self.month, self.day)
    }
}

/// The monthly estimation window: `len` consecutive months starting at
/// `start`. Month 0 is the anchor month at which every log index is 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeGrid {
    start: Month,
    len: usize,
}

impl TimeGrid {
    pub fn new(start: Month, len: usize) -> Result<Self, TimeError> {
        if len < 2 {
            return Err(TimeError::WindowTooShort(len));
        }
        Ok(TimeGrid { start, len })
    }

    /// Smallest grid covering both months, inclusive.
    pub fn spanning(first: Month, last: Month) -> Result<Self, TimeError> {
        let len = last.months_since(first).max(0) as usize + 1;
        TimeGrid::new(first, len)
    }

    pub fn start(&self) -> Month {
        self.start
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn end(&self) -> Month {
        self.start.offset(self.len as i64 - 1)
    }

    /// Month offset within the grid, or `None` when outside the window.
    pub fn index_of(&self, m: Month) -> Option<usize> {
        let k = m.months_since(self.start);
        if k >= 0 && (k as usize) < self.len {
            Some(k as usize)
        } else {
            None
        }
    }

    pub fn contains_date(&self, d: Date) -> bool {
        self.index_of(d.month_key()).is_some()
    }

    pub fn month_at(&self, index: usize) -> Month {
        debug_assert!(index < self.len);
        self.start.offset(index as i64)
    }

    pub fn months(&self) -> impl Iterator<Item = Month> + '_ {
        (0..self.len).map(|i| self.month_at(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    #[test]
    fn month_arithmetic_round_trips() {
        let m = Month::new(2010, 3).unwrap();
        assert_eq!(m.offset(10), Month::new(2011, 1).unwrap());
        assert_eq!(m.offset(-3), Month::new(2009, 12).unwrap());
        assert_eq!(m.offset(25).months_since(m), 25);
        assert_eq!(m.offset(-14).months_since(m), -14);
    }

    #[test]
    fn month_display_and_parse() {
        let m = Month::new(1996, 1).unwrap();
        assert_eq!(m.to_string(), "1996-01");
        assert_eq!("1996-01".parse::<Month>().unwrap(), m);
        assert!("1996-13".parse::<Month>().is_err());
        assert!("1996".parse::<Month>().is_err());
    }

    #[test]
    fn grid_indexing() {
        let grid = TimeGrid::new(Month::new(1990, 1).unwrap(), 24).unwrap();
        assert_eq!(grid.index_of(Month::new(1990, 1).unwrap()), Some(0));
        assert_eq!(grid.index_of(Month::new(1991, 12).unwrap()), Some(23));
        assert_eq!(grid.index_of(Month::new(1992, 1).unwrap()), None);
        assert_eq!(grid.index_of(Month::new(1989, 12).unwrap()), None);
        assert_eq!(grid.end(), Month::new(1991, 12).unwrap());
    }

    #[test]
    fn grid_requires_two_months() {
        assert!(TimeGrid::new(Month::new(2000, 1).unwrap(), 1).is_err());
        assert!(TimeGrid::new(Month::new(2000, 1).unwrap(), 2).is_ok());
    }

    #[test]
    fn date_ordering() {
        let a = Date::new(2010, 3, 15).unwrap();
        let b = Date::new(2010, 3, 16).unwrap();
        let c = Date::new(2010, 4, 1).unwrap();
        assert!(a < b && b < c);
        assert_eq!(a.month_key(), Month::new(2010, 3).unwrap());
    }
}
