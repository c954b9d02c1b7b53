//! Model time is counted in whole days since 2020-01-01 (day 0).

use chrono::NaiveDate;

pub const EPOCH: NaiveDate = match NaiveDate::from_ymd_opt(2020, 1, 1) {
    Some(d) => d,
    None => panic!("invalid epoch"),
};

/// Days since the model epoch; negative before 2020-01-01.
pub fn epoch_day(date: NaiveDate) -> i64 {
    (date - EPOCH).num_days()
}

pub fn date_of(day: i64) -> NaiveDate {
    EPOCH + chrono::Duration::days(day)
}

pub fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").ok()
}
