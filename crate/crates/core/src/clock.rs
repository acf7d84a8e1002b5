use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub const MINUTES_PER_DAY: u16 = 1440;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid time of day {0:?}, expected HH:MM")]
pub struct TimeOfDayError(pub String);

/// Minutes since midnight, in `[0, 1440)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MinuteOfDay(u16);

impl MinuteOfDay {
    pub const MIDNIGHT: MinuteOfDay = MinuteOfDay(0);

    pub fn new(minute: u16) -> Option<Self> {
        (minute < MINUTES_PER_DAY).then_some(MinuteOfDay(minute))
    }

    pub fn from_hm(hour: u16, minute: u16) -> Option<Self> {
        if hour < 24 && minute < 60 {
            Some(MinuteOfDay(hour * 60 + minute))
        } else {
            None
        }
    }

    /// Wall-clock minute for a Unix timestamp shifted by a fixed UTC offset.
    pub fn from_epoch_ms(epoch_ms: u64, utc_offset_minutes: i32) -> Self {
        let minutes = (epoch_ms / 60_000) as i64 + i64::from(utc_offset_minutes);
        MinuteOfDay(minutes.rem_euclid(i64::from(MINUTES_PER_DAY)) as u16)
    }

    pub fn get(self) -> u16 {
        self.0
    }
}

impl FromStr for MinuteOfDay {
    type Err = TimeOfDayError;

    /// Strict `HH:MM`, 24-hour clock.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || TimeOfDayError(s.to_string());
        let bytes = s.as_bytes();
        if bytes.len() != 5 || bytes[2] != b':' {
            return Err(err());
        }
        let digits = |range: std::ops::Range<usize>| -> Result<u16, TimeOfDayError> {
            let part = &s[range];
            if part.bytes().all(|b| b.is_ascii_digit()) {
                part.parse().map_err(|_| err())
            } else {
                Err(err())
            }
        };
        MinuteOfDay::from_hm(digits(0..2)?, digits(3..5)?).ok_or_else(err)
    }
}

impl fmt::Display for MinuteOfDay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02}:{:02}", self.0 / 60, self.0 % 60)
    }
}
