//! Ingestion of NYT-format cumulative count files and per-region run
//! configuration.
//!
//! The input CSV carries one row per (date, state) with cumulative cases and
//! deaths. Rows for the requested region are placed on a contiguous daily
//! grid, interior gaps are forward-filled at the cumulative level, and the
//! death column is first-differenced. Downward revisions of the cumulative
//! death count would produce negative daily counts; those differences are
//! clamped to zero and counted in [`DeathSeries::clamped_revisions`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;

use crate::calendar::{epoch_day, parse_date};
use crate::error::{Error, Result};

pub const NYT_HEADER: [&str; 5] = ["date", "state", "fips", "cases", "deaths"];

/// The IFR used when a region config does not set one.
pub const DEFAULT_IFR: f64 = 0.01;

/// Daily deaths and cumulative confirmed cases for one region on a
/// contiguous calendar grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeathSeries {
    pub region_id: String,
    pub start_date: NaiveDate,
    pub daily_deaths: Vec<u64>,
    pub cumulative_cases: Vec<u64>,
    /// Number of days whose cumulative death count went down and was clamped.
    pub clamped_revisions: usize,
}

impl DeathSeries {
    pub fn new(
        region_id: impl Into<String>,
        start_date: NaiveDate,
        daily_deaths: Vec<u64>,
        cumulative_cases: Vec<u64>,
    ) -> Result<Self> {
        if daily_deaths.len() != cumulative_cases.len() {
            return Err(Error::GridMismatch(format!(
                "{} death days vs {} case days",
                daily_deaths.len(),
                cumulative_cases.len()
            )));
        }
        if daily_deaths.is_empty() {
            return Err(Error::Validation("death series has no days".into()));
        }
        Ok(Self {
            region_id: region_id.into(),
            start_date,
            daily_deaths,
            cumulative_cases,
            clamped_revisions: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.daily_deaths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.daily_deaths.is_empty()
    }

    pub fn end_date(&self) -> NaiveDate {
        self.start_date + chrono::Duration::days(self.len() as i64 - 1)
    }

    /// Model day index of the first grid day.
    pub fn first_day(&self) -> i64 {
        epoch_day(self.start_date)
    }

    pub fn last_day(&self) -> i64 {
        self.first_day() + self.len() as i64 - 1
    }

    pub fn first_death_date(&self) -> Option<NaiveDate> {
        self.daily_deaths
            .iter()
            .position(|&d| d > 0)
            .map(|i| self.start_date + chrono::Duration::days(i as i64))
    }

    /// Cumulative deaths re-accumulated from the cleaned daily counts.
    pub fn cumulative_deaths(&self) -> Vec<u64> {
        self.daily_deaths
            .iter()
            .scan(0u64, |acc, &d| {
                *acc += d;
                Some(*acc)
            })
            .collect()
    }

    /// Drops every day after `end`. Fails if nothing would remain.
    pub fn truncated_to(&self, end: NaiveDate) -> Result<Self> {
        if end < self.start_date {
            return Err(Error::Validation(format!(
                "data end {end} precedes first data day {}",
                self.start_date
            )));
        }
        let keep = ((end - self.start_date).num_days() as usize + 1).min(self.len());
        Ok(Self {
            region_id: self.region_id.clone(),
            start_date: self.start_date,
            daily_deaths: self.daily_deaths[..keep].to_vec(),
            cumulative_cases: self.cumulative_cases[..keep].to_vec(),
            clamped_revisions: self.clamped_revisions,
        })
    }

    /// Serializes back to the NYT cumulative layout. `fips` is left empty.
    pub fn to_nyt_csv(&self) -> String {
        let mut out = NYT_HEADER.join(",");
        out.push('\n');
        for (i, (cum_d, cases)) in self
            .cumulative_deaths()
            .into_iter()
            .zip(&self.cumulative_cases)
            .enumerate()
        {
            let date = self.start_date + chrono::Duration::days(i as i64);
            let _ = writeln!(out, "{date},{},,{cases},{cum_d}", self.region_id);
        }
        out
    }
}

struct RawRow {
    line: usize,
    cases: u64,
    deaths: u64,
}

fn parse_count(field: &str, name: &str, line: usize) -> Result<u64> {
    field.trim().parse::<u64>().map_err(|_| Error::Parse {
        line,
        message: format!("non-numeric {name} field `{field}`"),
    })
}

/// Parses NYT-format cumulative counts for `region_id` (exact, case-sensitive
/// match on the `state` column) into a daily series.
pub fn parse_nyt_csv(raw_text: &str, region_id: &str) -> Result<DeathSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(raw_text.as_bytes());

    let header = reader.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let found: Vec<&str> = header.iter().collect();
    if found != NYT_HEADER {
        return Err(Error::Header {
            expected: NYT_HEADER.join(","),
            found: found.join(","),
        });
    }

    let mut rows: BTreeMap<NaiveDate, RawRow> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != NYT_HEADER.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected 5 fields, found {}", record.len()),
            });
        }
        if &record[1] != region_id {
            continue;
        }
        let date = parse_date(&record[0]).ok_or_else(|| Error::Parse {
            line,
            message: format!("invalid date `{}`", &record[0]),
        })?;
        let cases = parse_count(&record[3], "cases", line)?;
        let deaths = parse_count(&record[4], "deaths", line)?;
        if let Some(prev) = rows.insert(date, RawRow { line, cases, deaths }) {
            return Err(Error::Parse {
                line,
                message: format!("duplicate date {date} (first seen at line {})", prev.line),
            });
        }
    }

    let (&start_date, _) = rows
        .first_key_value()
        .ok_or_else(|| Error::EmptyRegion(region_id.to_string()))?;
    let (&end_date, _) = rows.last_key_value().expect("non-empty");
    let n_days = (end_date - start_date).num_days() as usize + 1;

    let mut daily_deaths = Vec::with_capacity(n_days);
    let mut cumulative_cases = Vec::with_capacity(n_days);
    let mut clamped = 0;
    let (mut cum_deaths, mut cum_cases, mut max_cases) = (0u64, 0u64, 0u64);
    for i in 0..n_days {
        let date = start_date + chrono::Duration::days(i as i64);
        let prev_deaths = cum_deaths;
        if let Some(row) = rows.get(&date) {
            cum_deaths = row.deaths;
            cum_cases = row.cases;
        }
        if cum_deaths < prev_deaths {
            clamped += 1;
        }
        daily_deaths.push(cum_deaths.saturating_sub(prev_deaths));
        max_cases = max_cases.max(cum_cases);
        cumulative_cases.push(max_cases);
    }

    Ok(DeathSeries {
        region_id: region_id.to_string(),
        start_date,
        daily_deaths,
        cumulative_cases,
        clamped_revisions: clamped,
    })
}

/// Per-region settings for a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionConfig {
    pub region_id: String,
    pub population: u64,
    pub intervention_date: NaiveDate,
    pub ifr: f64,
    pub data_end_date: NaiveDate,
}

impl RegionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population == 0 {
            return Err(Error::Validation("population must be positive".into()));
        }
        validate_ifr(self.ifr)?;
        if self.intervention_date > self.data_end_date {
            return Err(Error::Validation(format!(
                "intervention date {} is after data end {}",
                self.intervention_date, self.data_end_date
            )));
        }
        Ok(())
    }

    pub fn intervention_day(&self) -> i64 {
        epoch_day(self.intervention_date)
    }

    pub fn data_end_day(&self) -> i64 {
        epoch_day(self.data_end_date)
    }

    pub fn with_ifr(&self, ifr: f64) -> Result<Self> {
        validate_ifr(ifr)?;
        Ok(Self {
            ifr,
            ..self.clone()
        })
    }

    pub fn to_config_string(&self) -> String {
        format!(
            "region_id = {}\npopulation = {}\nintervention_date = {}\nifr = {}\ndata_end_date = {}\n",
            self.region_id, self.population, self.intervention_date, self.ifr, self.data_end_date
        )
    }
}

pub fn validate_ifr(ifr: f64) -> Result<()> {
    if ifr > 0.0 && ifr < 1.0 {
        Ok(())
    } else {
        Err(Error::Validation(format!("ifr {ifr} is outside (0, 1)")))
    }
}

/// Parses a flat `key = value` region config. Blank lines and `#` comments
/// are ignored.
pub fn parse_region_config(text: &str) -> Result<RegionConfig> {
    let mut values: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
            line,
            message: format!("expected `key = value`, found `{content}`"),
        })?;
        let key = key.trim();
        if !matches!(
            key,
            "region_id" | "population" | "intervention_date" | "ifr" | "data_end_date"
        ) {
            return Err(Error::Parse {
                line,
                message: format!("unknown key `{key}`"),
            });
        }
        if values.insert(key, (line, value.trim())).is_some() {
            return Err(Error::Parse {
                line,
                message: format!("duplicate key `{key}`"),
            });
        }
    }

    let require = |key: &str| -> Result<(usize, &str)> {
        values
            .get(key)
            .copied()
            .ok_or_else(|| Error::MissingKey(key.to_string()))
    };
    let date = |key: &str| -> Result<NaiveDate> {
        let (line, v) = require(key)?;
        parse_date(v).ok_or_else(|| Error::Parse {
            line,
            message: format!("invalid date `{v}` for `{key}`"),
        })
    };

    let (_, region_id) = require("region_id")?;
    if region_id.is_empty() {
        return Err(Error::Validation("region_id is empty".into()));
    }
    let (line, pop) = require("population")?;
    let population = pop.replace('_', "").parse::<u64>().map_err(|_| Error::Parse {
        line,
        message: format!("invalid population `{pop}`"),
    })?;
    let ifr = match values.get("ifr") {
        Some(&(line, v)) => v.parse::<f64>().map_err(|_| Error::Parse {
            line,
            message: format!("invalid ifr `{v}`"),
        })?,
        None => DEFAULT_IFR,
    };

    let config = RegionConfig {
        region_id: region_id.to_string(),
        population,
        intervention_date: date("intervention_date")?,
        ifr,
        data_end_date: date("data_end_date")?,
    };
    config.validate()?;
    Ok(config)
}

pub fn load_region_config(path: impl AsRef<Path>) -> Result<RegionConfig> {
    parse_region_config(&std::fs::read_to_string(path)?)
}
