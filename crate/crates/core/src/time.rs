//! Hour-resolution UTC timestamps.
//!
//! All forecast and measurement times live on an hourly grid, so a timestamp
//! is stored as whole hours since the Unix epoch. The text form is
//! `YYYY-MM-DDTHH:MMZ` with minutes always `00`.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, NaiveDate, TimeZone, Timelike, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Whole hours since 1970-01-01T00:00Z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(i64);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TimestampError {
    Malformed,
    NotOnHour,
}

impl Timestamp {
    pub const fn from_hours(hours: i64) -> Self {
        Timestamp(hours)
    }

    pub const fn hours(self) -> i64 {
        self.0
    }

    pub fn from_ymdh(year: i32, month: u32, day: u32, hour: u32) -> Option<Self> {
        let date = NaiveDate::from_ymd_opt(year, month, day)?;
        if hour > 23 {
            return None;
        }
        let days = date.signed_duration_since(epoch_date()).num_days();
        Some(Timestamp(days * 24 + hour as i64))
    }

    /// Midnight at the start of the given calendar date.
    pub fn from_date(date: NaiveDate) -> Self {
        Timestamp(date.signed_duration_since(epoch_date()).num_days() * 24)
    }

    pub fn plus_hours(self, hours: i64) -> Self {
        Timestamp(self.0 + hours)
    }

    pub fn to_datetime(self) -> DateTime<Utc> {
        Utc.timestamp_opt(self.0 * 3600, 0)
            .single()
            .expect("hour count in chrono range")
    }

    pub fn date(self) -> NaiveDate {
        self.to_datetime().date_naive()
    }

    /// Parse `YYYY-MM-DDTHH:MMZ`, distinguishing off-hour values from garbage.
    pub fn parse(s: &str) -> Result<Self, TimestampError> {
        let b = s.as_bytes();
        if b.len() != 17
            || b[4] != b'-'
            || b[7] != b'-'
            || b[10] != b'T'
            || b[13] != b':'
            || b[16] != b'Z'
        {
            return Err(TimestampError::Malformed);
        }
        let num = |range: std::ops::Range<usize>| -> Result<u32, TimestampError> {
            let mut v = 0u32;
            for &c in &b[range] {
                if !c.is_ascii_digit() {
                    return Err(TimestampError::Malformed);
                }
                v = v * 10 + (c - b'0') as u32;
            }
            Ok(v)
        };
        let year = num(0..4)? as i32;
        let month = num(5..7)?;
        let day = num(8..10)?;
        let hour = num(11..13)?;
        let minute = num(14..16)?;
        if minute > 59 {
            return Err(TimestampError::Malformed);
        }
        let ts = Timestamp::from_ymdh(year, month, day, hour).ok_or(TimestampError::Malformed)?;
        if minute != 0 {
            return Err(TimestampError::NotOnHour);
        }
        Ok(ts)
    }
}

fn epoch_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).unwrap()
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dt = self.to_datetime();
        write!(
            f,
            "{:04}-{:02}-{:02}T{:02}:00Z",
            dt.year(),
            dt.month(),
            dt.day(),
            dt.hour()
        )
    }
}

impl FromStr for Timestamp {
    type Err = TimestampError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Timestamp::parse(s)
    }
}

impl fmt::Display for TimestampError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimestampError::Malformed => write!(f, "expected YYYY-MM-DDTHH:MMZ"),
            TimestampError::NotOnHour => write!(f, "timestamp is not on the hour"),
        }
    }
}

impl std::error::Error for TimestampError {}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Timestamp::parse(&s).map_err(serde::de::Error::custom)
    }
}
