//! Posterior summaries: reproduction numbers, undercount factors, predictive
//! death bands and forecasts, plus the generative direction used for
//! synthetic data.
//!
//! Credible intervals are equal-tailed empirical 2.5% / 97.5% percentiles
//! (linear interpolation between order statistics). Predictive bands use the
//! inverse empirical CDF so every band row is an observed integer count.

use std::fmt::Write as _;

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::calendar::{date_of, epoch_day, EPOCH};
use crate::data_ingest::{DeathSeries, RegionConfig};
use crate::delay_dist::DelayDistribution;
use crate::epi_model::{effective_rt, r0, simulate_sir, Params, Trajectory};
use crate::error::{Error, Result};
use crate::likelihood::death_intensities;
use crate::sampler::Chain;

/// Longest forecast the tool will produce, in days.
pub const MAX_FORECAST_DAYS: usize = 60;
/// Draws used for predictive bands.
pub const MAX_BAND_DRAWS: usize = 2_000;
/// Share of cumulative infections reported as confirmed cases in synthetic
/// data.
pub const SYNTHETIC_CASE_FRACTION: f64 = 0.1;

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Inverse empirical CDF of sorted counts.
pub fn count_quantile_sorted(sorted: &[u64], q: f64) -> u64 {
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Posterior mean with an equal-tailed 95% interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn from_samples(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyChain);
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        Ok(Self {
            // Summation rounding can push the mean of identical values a hair
            // outside [lower, upper].
            mean: mean.clamp(sorted[0], sorted[sorted.len() - 1]),
            lower: quantile_sorted(&sorted, 0.025),
            upper: quantile_sorted(&sorted, 0.975),
        })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

impl std::fmt::Display for Interval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.2} ({:.2},{:.2})", self.mean, self.lower, self.upper)
    }
}

fn simulate_draws(draws: &[Params], region: &RegionConfig, horizon: i64) -> Vec<Option<Trajectory>> {
    let n = region.population as f64;
    let t1 = region.intervention_day();
    draws
        .par_iter()
        .map(|d| simulate_sir(d, n, t1, horizon).ok())
        .collect()
}

/// One row of the reported tables.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub region_id: String,
    pub p: f64,
    pub r0: Interval,
    /// Reproduction number at the last data day.
    pub rt_end: Interval,
    /// Undercount at the last data day; absent when no cases are recorded.
    pub undercount_end: Option<Interval>,
    pub n_draws: usize,
    pub acceptance_rate: f64,
}

pub fn summarize(chain: &Chain, region: &RegionConfig, cases: &DeathSeries) -> Result<SummaryRow> {
    if chain.is_empty() {
        return Err(Error::EmptyChain);
    }
    let end = region.data_end_day();
    let n = region.population as f64;
    let trajectories = simulate_draws(&chain.draws, region, end);

    let r0s: Vec<f64> = chain.draws.iter().map(r0).collect();
    let rts: Vec<f64> = chain
        .draws
        .iter()
        .zip(&trajectories)
        .map(|(d, traj)| {
            let s = traj.as_ref().map_or(n, |t| t.s_at(end));
            effective_rt(d, s, n)
        })
        .collect();

    let cases_end = case_count_at(cases, end);
    let undercount_end = match cases_end {
        Some(c) if c > 0 => {
            let u: Vec<f64> = trajectories
                .iter()
                .map(|t| t.as_ref().map_or(0.0, |t| t.cumulative_infections(end)) / c as f64)
                .collect();
            Some(Interval::from_samples(&u)?)
        }
        _ => None,
    };

    Ok(SummaryRow {
        region_id: region.region_id.clone(),
        p: chain.draws[0].p,
        r0: Interval::from_samples(&r0s)?,
        rt_end: Interval::from_samples(&rts)?,
        undercount_end,
        n_draws: chain.len(),
        acceptance_rate: chain.acceptance_rate,
    })
}

fn case_count_at(series: &DeathSeries, day: i64) -> Option<u64> {
    if day < series.first_day() || day > series.last_day() {
        return None;
    }
    Some(series.cumulative_cases[(day - series.first_day()) as usize])
}

/// Selects one interval from a summary row.
type Pick<'a> = &'a dyn Fn(&SummaryRow) -> Option<Interval>;

/// Rows for several regions and IFR values. The text form has one block per
/// quantity, IFR values down and regions across.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
}

impl SummaryTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "region,p,n_draws,acceptance_rate,r0_mean,r0_lower,r0_upper,\
             rt_mean,rt_lower,rt_upper,undercount_mean,undercount_lower,undercount_upper\n",
        );
        for r in &self.rows {
            let u = r
                .undercount_end
                .map(|u| format!("{},{},{}", u.mean, u.lower, u.upper))
                .unwrap_or_else(|| ",,".into());
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{u}",
                r.region_id,
                r.p,
                r.n_draws,
                r.acceptance_rate,
                r.r0.mean,
                r.r0.lower,
                r.r0.upper,
                r.rt_end.mean,
                r.rt_end.lower,
                r.rt_end.upper
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut regions: Vec<&str> = Vec::new();
        let mut ps: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !regions.contains(&r.region_id.as_str()) {
                regions.push(&r.region_id);
            }
            if !ps.contains(&r.p) {
                ps.push(r.p);
            }
        }
        ps.sort_by(f64::total_cmp);
        let cell = |region: &str, p: f64, f: Pick| {
            self.rows
                .iter()
                .find(|r| r.region_id == region && r.p == p)
                .and_then(f)
                .map_or_else(|| "-".to_string(), |i| i.to_string())
        };

        let blocks: [(&str, Pick); 3] = [
            ("Posterior mean of R0 (95% credible interval)", &|r| Some(r.r0)),
            ("Posterior mean of undercount at data end (95% credible interval)", &|r| {
                r.undercount_end
            }),
            ("Posterior mean of R_t at data end (95% credible interval)", &|r| Some(r.rt_end)),
        ];
        let mut out = String::new();
        for (title, f) in blocks {
            let _ = writeln!(out, "{title}");
            let _ = write!(out, "{:>8}", "p");
            for region in &regions {
                let _ = write!(out, "  {region:>22}");
            }
            out.push('\n');
            for &p in &ps {
                let _ = write!(out, "{p:>8}");
                for region in &regions {
                    let _ = write!(out, "  {:>22}", cell(region, p, f));
                }
                out.push('\n');
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UndercountPoint {
    pub date: NaiveDate,
    pub cumulative_cases: u64,
    pub interval: Interval,
}

/// Undercount factor (model cumulative infections over confirmed cases) for
/// each data day with at least one confirmed case.
pub fn undercount_series(
    chain: &Chain,
    deaths: &DeathSeries,
    region: &RegionConfig,
) -> Result<Vec<UndercountPoint>> {
    if chain.is_empty() {
        return Err(Error::EmptyChain);
    }
    let end = region.data_end_day().min(deaths.last_day());
    let days: Vec<(i64, u64)> = (deaths.first_day()..=end)
        .filter_map(|d| case_count_at(deaths, d).filter(|&c| c > 0).map(|c| (d, c)))
        .collect();
    if days.is_empty() {
        return Ok(Vec::new());
    }
    let trajectories = simulate_draws(&chain.draws, region, end);
    days.iter()
        .map(|&(day, cases)| {
            let values: Vec<f64> = trajectories
                .iter()
                .map(|t| t.as_ref().map_or(0.0, |t| t.cumulative_infections(day)) / cases as f64)
                .collect();
            Ok(UndercountPoint {
                date: date_of(day),
                cumulative_cases: cases,
                interval: Interval::from_samples(&values)?,
            })
        })
        .collect()
}

pub fn undercount_csv(points: &[UndercountPoint]) -> String {
    let mut out = String::from("date,cumulative_cases,lower,mean,upper\n");
    for pt in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            pt.date, pt.cumulative_cases, pt.interval.lower, pt.interval.mean, pt.interval.upper
        );
    }
    out
}

/// Pointwise predictive quantiles of daily deaths.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveBand {
    pub start_date: NaiveDate,
    /// Last day fitted to data; later days are forecasts.
    pub data_end_date: NaiveDate,
    pub lower: Vec<u64>,
    pub median: Vec<u64>,
    pub upper: Vec<u64>,
    pub mean_intensity: Vec<f64>,
}

impl PredictiveBand {
    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn date(&self, k: usize) -> NaiveDate {
        self.start_date + chrono::Duration::days(k as i64)
    }

    /// `date,lower,median,upper,mean_intensity,forecast` with `observed`
    /// appended when the data covers the day.
    pub fn to_csv(&self, observed: Option<&DeathSeries>) -> String {
        let mut out = String::from("date,lower,median,upper,mean_intensity,forecast,observed\n");
        for k in 0..self.len() {
            let date = self.date(k);
            let obs = observed
                .and_then(|s| {
                    let day = epoch_day(date);
                    (day >= s.first_day() && day <= s.last_day())
                        .then(|| s.daily_deaths[(day - s.first_day()) as usize])
                })
                .map(|d| d.to_string())
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{date},{},{},{},{},{},{obs}",
                self.lower[k],
                self.median[k],
                self.upper[k],
                self.mean_intensity[k],
                u8::from(date > self.data_end_date)
            );
        }
        out
    }
}

fn poisson_draw(rng: &mut ChaCha8Rng, lambda: f64) -> u64 {
    match Poisson::new(lambda) {
        Ok(d) => d.sample(rng) as u64,
        Err(_) => 0,
    }
}

fn intensities_for(
    params: &Params,
    theta: &DelayDistribution,
    region: &RegionConfig,
    first_day: i64,
    last_day: i64,
) -> Vec<f64> {
    match simulate_sir(
        params,
        region.population as f64,
        region.intervention_day(),
        last_day,
    ) {
        Ok(traj) => death_intensities(traj.incidence(), theta, params.p, first_day, last_day),
        Err(_) => vec![0.0; (last_day - first_day + 1) as usize],
    }
}

/// Predictive band from `start_date` through the data end plus
/// `forecast_days`, holding each draw's parameters fixed over the forecast.
/// Uses at most [`MAX_BAND_DRAWS`] evenly thinned draws and one Poisson
/// realization per draw.
pub fn predictive_band(
    chain: &Chain,
    theta: &DelayDistribution,
    region: &RegionConfig,
    start_date: NaiveDate,
    forecast_days: usize,
    seed: u64,
) -> Result<PredictiveBand> {
    if forecast_days > MAX_FORECAST_DAYS {
        return Err(Error::HorizonTooLong(forecast_days));
    }
    if chain.is_empty() {
        return Err(Error::EmptyChain);
    }
    let first_day = epoch_day(start_date);
    let last_day = region.data_end_day() + forecast_days as i64;
    if last_day < first_day {
        return Err(Error::Validation(format!(
            "band start {start_date} is after its last day {}",
            date_of(last_day)
        )));
    }
    let n_days = (last_day - first_day + 1) as usize;
    let draws = chain.thinned(MAX_BAND_DRAWS);

    let sims: Vec<(Vec<f64>, Vec<u64>)> = draws
        .par_iter()
        .enumerate()
        .map(|(k, params)| {
            let lambda = intensities_for(params, theta, region, first_day, last_day);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let counts = lambda.iter().map(|&l| poisson_draw(&mut rng, l)).collect();
            (lambda, counts)
        })
        .collect();

    let mut band = PredictiveBand {
        start_date,
        data_end_date: region.data_end_date,
        lower: Vec::with_capacity(n_days),
        median: Vec::with_capacity(n_days),
        upper: Vec::with_capacity(n_days),
        mean_intensity: Vec::with_capacity(n_days),
    };
    let mut column = vec![0u64; sims.len()];
    for day in 0..n_days {
        for (slot, (_, counts)) in column.iter_mut().zip(&sims) {
            *slot = counts[day];
        }
        column.sort_unstable();
        band.lower.push(count_quantile_sorted(&column, 0.025));
        band.median.push(count_quantile_sorted(&column, 0.5));
        band.upper.push(count_quantile_sorted(&column, 0.975));
        band.mean_intensity
            .push(sims.iter().map(|(l, _)| l[day]).sum::<f64>() / sims.len() as f64);
    }
    Ok(band)
}

/// Draws one death series from the model, on a grid from 2020-01-01 through
/// the region's data end. Confirmed cases are a fixed fraction of cumulative
/// infections.
pub fn synthesize_data(
    true_params: &Params,
    region: &RegionConfig,
    theta: &DelayDistribution,
    seed: u64,
) -> Result<DeathSeries> {
    let last = region.data_end_day();
    if last < 0 {
        return Err(Error::Validation("data end precedes 2020-01-01".into()));
    }
    let traj = simulate_sir(
        true_params,
        region.population as f64,
        region.intervention_day(),
        last,
    )
    .ok();
    let lambda = match &traj {
        Some(t) => death_intensities(t.incidence(), theta, true_params.p, 0, last),
        None => vec![0.0; last as usize + 1],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let deaths: Vec<u64> = lambda.iter().map(|&l| poisson_draw(&mut rng, l)).collect();
    let cases: Vec<u64> = (0..=last)
        .map(|d| {
            let inf = traj.as_ref().map_or(0.0, |t| t.cumulative_infections(d));
            (SYNTHETIC_CASE_FRACTION * inf).floor() as u64
        })
        .collect();
    DeathSeries::new(region.region_id.clone(), EPOCH, deaths, cases)
}
