use std::fmt;
use std::ops::{Add, Sub};

use chrono::{NaiveDate, NaiveDateTime, TimeDelta};
use serde::{Deserialize, Serialize};

/// Length of one bucket of the arrival-count grid, in minutes.
pub const QUARTER_MINUTES: i64 = 15;

const TIME_FORMAT: &str = "%Y-%m-%dT%H:%MZ";

/// Whole minutes (UTC) since the run epoch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TimePoint(pub i64);

impl TimePoint {
    pub const fn from_minutes(minutes: i64) -> Self {
        TimePoint(minutes)
    }

    pub const fn minutes(self) -> i64 {
        self.0
    }

    pub fn quarter(self) -> QuarterIndex {
        quarter_index(self)
    }
}

impl Add<i64> for TimePoint {
    type Output = TimePoint;
    fn add(self, minutes: i64) -> TimePoint {
        TimePoint(self.0 + minutes)
    }
}

impl Sub<i64> for TimePoint {
    type Output = TimePoint;
    fn sub(self, minutes: i64) -> TimePoint {
        TimePoint(self.0 - minutes)
    }
}

impl Sub for TimePoint {
    type Output = i64;
    fn sub(self, other: TimePoint) -> i64 {
        self.0 - other.0
    }
}

impl fmt::Display for TimePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02}:{:02}+{}d", self.0.rem_euclid(1440) / 60, self.0.rem_euclid(60), self.0.div_euclid(1440))
    }
}

/// 15-minute bucket number counted from the run epoch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QuarterIndex(pub i64);

impl QuarterIndex {
    pub const fn start(self) -> TimePoint {
        TimePoint(self.0 * QUARTER_MINUTES)
    }

    pub const fn next(self) -> QuarterIndex {
        QuarterIndex(self.0 + 1)
    }
}

/// Bucket containing `t`; bucket `k` spans `[15k, 15k + 15)`.
pub fn quarter_index(t: TimePoint) -> QuarterIndex {
    QuarterIndex(t.0.div_euclid(QUARTER_MINUTES))
}

/// First quarter that starts at or after `t`.
pub fn quarter_ceil(t: TimePoint) -> QuarterIndex {
    QuarterIndex((t.0 + QUARTER_MINUTES - 1).div_euclid(QUARTER_MINUTES))
}

/// Midnight UTC of the day every [`TimePoint`] in a run is measured from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Epoch(NaiveDate);

impl Epoch {
    pub fn new(date: NaiveDate) -> Self {
        Epoch(date)
    }

    pub fn from_ymd(year: i32, month: u32, day: u32) -> Option<Self> {
        NaiveDate::from_ymd_opt(year, month, day).map(Epoch)
    }

    pub fn date(&self) -> NaiveDate {
        self.0
    }

    fn origin(&self) -> NaiveDateTime {
        self.0.and_hms_opt(0, 0, 0).expect("midnight is valid")
    }

    /// Parses `YYYY-MM-DDTHH:MMZ`. Anything that does not re-format to the
    /// exact input is rejected.
    pub fn parse_time(&self, text: &str) -> Result<TimePoint, String> {
        let parsed = NaiveDateTime::parse_from_str(text, TIME_FORMAT)
            .map_err(|e| format!("`{text}` is not YYYY-MM-DDTHH:MMZ ({e})"))?;
        if parsed.format(TIME_FORMAT).to_string() != text {
            return Err(format!("`{text}` is not in canonical YYYY-MM-DDTHH:MMZ form"));
        }
        let minutes = (parsed - self.origin()).num_minutes();
        if minutes < 0 {
            return Err(format!("`{text}` precedes the run epoch {}", self.0));
        }
        Ok(TimePoint(minutes))
    }

    pub fn format_time(&self, t: TimePoint) -> String {
        (self.origin() + TimeDelta::minutes(t.0)).format(TIME_FORMAT).to_string()
    }
}

impl Default for Epoch {
    fn default() -> Self {
        Epoch::from_ymd(2019, 1, 1).expect("valid date")
    }
}

impl std::str::FromStr for Epoch {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        NaiveDate::parse_from_str(s, "%Y-%m-%d")
            .map(Epoch)
            .map_err(|e| format!("epoch `{s}` is not YYYY-MM-DD: {e}"))
    }
}

impl fmt::Display for Epoch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.format("%Y-%m-%d"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quarter_examples() {
        assert_eq!(quarter_index(TimePoint(0)), QuarterIndex(0));
        assert_eq!(quarter_index(TimePoint(15)), QuarterIndex(1));
        assert_eq!(quarter_index(TimePoint(44)), QuarterIndex(2));
        assert_eq!(quarter_ceil(TimePoint(44)), QuarterIndex(3));
        assert_eq!(quarter_ceil(TimePoint(45)), QuarterIndex(3));
    }

    #[test]
    fn parse_and_format() {
        let epoch = Epoch::default();
        let t = epoch.parse_time("2019-01-02T15:00Z").unwrap();
        assert_eq!(t, TimePoint(1440 + 900));
        assert_eq!(epoch.format_time(t), "2019-01-02T15:00Z");
        assert!(epoch.parse_time("2018-12-31T23:59Z").is_err());
        assert!(epoch.parse_time("2019-01-02 15:00").is_err());
        assert!(epoch.parse_time("2019-1-02T15:00Z").is_err());
        assert!(epoch.parse_time("2019-01-02T15:00:00Z").is_err());
    }

    proptest! {
        #[test]
        fn quarter_brackets_time(t in 0i64..10_000_000) {
            let q = quarter_index(TimePoint(t));
            prop_assert!(q.0 * 15 <= t && t < q.0 * 15 + 15);
            prop_assert!(quarter_index(TimePoint(t + 1)) >= q);
        }

        #[test]
        fn time_text_round_trip(t in 0i64..5_000_000) {
            let epoch = Epoch::default();
            let text = epoch.format_time(TimePoint(t));
            prop_assert_eq!(epoch.parse_time(&text).unwrap(), TimePoint(t));
        }
    }
}
