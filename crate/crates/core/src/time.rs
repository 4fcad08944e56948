//! Date handling for the temporal search bound.
//!
//! All instants are seconds since the Unix epoch. Tool arguments accept an
//! ISO-8601 date or datetime; a bare date is widened to the start of the day
//! for `after` and to the end of the day for `before`, both in UTC.

use alloc::string::{String, ToString};

use chrono::{DateTime, NaiveDate, NaiveDateTime, NaiveTime, TimeZone, Utc};

/// Seconds since the Unix epoch.
pub type Timestamp = i64;

/// Which side of a window a date-only value is widened to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DayEdge {
    Start,
    End,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unrecognised date {0:?}; expected YYYY-MM-DD or an ISO-8601 datetime")]
pub struct DateError(pub String);

pub fn parse_date_bound(text: &str, edge: DayEdge) -> Result<Timestamp, DateError> {
    let t = text.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(t) {
        return Ok(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(t, fmt) {
            return Ok(Utc.from_utc_datetime(&naive).timestamp());
        }
    }
    if let Ok(date) = NaiveDate::parse_from_str(t, "%Y-%m-%d") {
        let time = match edge {
            DayEdge::Start => NaiveTime::MIN,
            DayEdge::End => NaiveTime::from_hms_opt(23, 59, 59).expect("valid time"),
        };
        return Ok(Utc.from_utc_datetime(&date.and_time(time)).timestamp());
    }
    Err(DateError(t.to_string()))
}

/// `2017-03-04T23:59:59Z`
pub fn format_iso(ts: Timestamp) -> String {
    match Utc.timestamp_opt(ts, 0).single() {
        Some(dt) => dt.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
        None => alloc::format!("@{ts}"),
    }
}

/// `2017-03-04`
pub fn format_day(ts: Timestamp) -> String {
    match Utc.timestamp_opt(ts, 0).single() {
        Some(dt) => dt.format("%Y-%m-%d").to_string(),
        None => alloc::format!("@{ts}"),
    }
}
