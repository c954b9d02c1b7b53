//! Poisson death likelihood, parameter prior, and the unnormalized log
//! posterior targeted by the sampler.
//!
//! Deaths on day `r` are `Poisson(lambda_r)` with
//! `lambda_r = p * sum_{t <= r} nu_t * theta_{r - t}`.
//!
//! Prior, in the sampled coordinates `(beta, gamma, t0, phi)`:
//! * `1/gamma ~ N(6.4, 1.5)` truncated to `[3.4, 9.4]`, plus the Jacobian
//!   `|d(1/gamma)/d gamma| = gamma^-2` because the chain moves in `gamma`;
//! * `beta | gamma ~ N(2.5 gamma, 1.5 gamma)` truncated to `[gamma, 4 gamma]`,
//!   fully normalized (its scale depends on `gamma`);
//! * `t0 ~ Uniform[0, 50]`, `phi ~ Uniform(0.01, 0.99)`.

use std::sync::atomic::{AtomicU64, Ordering};

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::ln_gamma;

use crate::data_ingest::{DeathSeries, RegionConfig};
use crate::delay_dist::DelayDistribution;
use crate::epi_model::{simulate_sir, support, IncidenceView, Params};
use crate::error::{Error, Result};

/// A log density value. May be `-inf`; never `+inf` or NaN.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LogDensity(f64);

impl LogDensity {
    pub const NEG_INFINITY: Self = Self(f64::NEG_INFINITY);

    pub fn new(value: f64) -> Self {
        debug_assert!(!value.is_nan(), "log density is NaN");
        debug_assert!(value != f64::INFINITY, "log density is +inf");
        Self(value)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

impl std::ops::Add for LogDensity {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self(self.0 + rhs.0)
    }
}

/// Expected deaths on day `r`.
pub fn death_intensity(nu: IncidenceView<'_>, theta: &DelayDistribution, p: f64, r: i64) -> f64 {
    let m = theta.max_delay() as i64;
    let lo = (r - m).max(nu.first_day);
    let mut acc = 0.0;
    let mut t = r;
    while t >= lo {
        acc += nu.at(t) * theta.prob((r - t) as usize);
        t -= 1;
    }
    p * acc
}

/// Expected deaths for each day in `first_day..=last_day`.
pub fn death_intensities(
    nu: IncidenceView<'_>,
    theta: &DelayDistribution,
    p: f64,
    first_day: i64,
    last_day: i64,
) -> Vec<f64> {
    (first_day..=last_day)
        .map(|r| death_intensity(nu, theta, p, r))
        .collect()
}

/// Log Poisson mass; `lambda = 0` gives 0 for `k = 0` and `-inf` otherwise.
pub fn poisson_ln_pmf(k: u64, lambda: f64, ln_k_factorial: f64) -> f64 {
    if lambda <= 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    k as f64 * lambda.ln() - lambda - ln_k_factorial
}

fn ln_factorial(k: u64) -> f64 {
    ln_gamma(k as f64 + 1.0)
}

fn sum_ln_pmf(deaths: &[u64], intensities: &[f64], ln_fact: impl Fn(usize) -> f64) -> LogDensity {
    let mut total = 0.0;
    for (k, (&d, &lambda)) in deaths.iter().zip(intensities).enumerate() {
        total += poisson_ln_pmf(d, lambda, ln_fact(k));
        if total == f64::NEG_INFINITY {
            break;
        }
    }
    LogDensity::new(total)
}

/// Poisson log likelihood of the observed deaths over the whole series grid.
pub fn log_likelihood(
    deaths: &DeathSeries,
    nu: IncidenceView<'_>,
    theta: &DelayDistribution,
    p: f64,
) -> Result<LogDensity> {
    if nu.last_day() < deaths.last_day() {
        return Err(Error::GridMismatch(format!(
            "infections end on day {} but deaths run to day {}",
            nu.last_day(),
            deaths.last_day()
        )));
    }
    let lambda = death_intensities(nu, theta, p, deaths.first_day(), deaths.last_day());
    Ok(sum_ln_pmf(&deaths.daily_deaths, &lambda, |k| {
        ln_factorial(deaths.daily_deaths[k])
    }))
}

/// Log density of `N(mean, sd)` truncated to `[lo, hi]`, or `-inf` outside.
pub fn truncated_normal_ln_pdf(x: f64, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    if !(x >= lo && x <= hi) {
        return f64::NEG_INFINITY;
    }
    let std = Normal::standard();
    let mass = std.cdf((hi - mean) / sd) - std.cdf((lo - mean) / sd);
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() - mass.ln()
}

pub const INFECTIOUS_PERIOD_MEAN: f64 = 6.4;
pub const INFECTIOUS_PERIOD_SD: f64 = 1.5;
pub const R0_PRIOR_MEAN: f64 = 2.5;
pub const R0_PRIOR_SD: f64 = 1.5;

pub fn log_prior(params: &Params) -> LogDensity {
    if !params.in_support() {
        return LogDensity::NEG_INFINITY;
    }
    let gamma = params.gamma;
    let (plo, phi_hi) = support::INFECTIOUS_PERIOD;
    let period = truncated_normal_ln_pdf(
        1.0 / gamma,
        INFECTIOUS_PERIOD_MEAN,
        INFECTIOUS_PERIOD_SD,
        plo,
        phi_hi,
    ) - 2.0 * gamma.ln();
    let (rlo, rhi) = support::R0;
    let beta = truncated_normal_ln_pdf(
        params.beta,
        R0_PRIOR_MEAN * gamma,
        R0_PRIOR_SD * gamma,
        rlo * gamma,
        rhi * gamma,
    );
    let t0 = -(support::T0.1 - support::T0.0).ln();
    let phi = -(support::PHI.1 - support::PHI.0).ln();
    LogDensity::new(period + beta + t0 + phi)
}

/// The fit target for one region and IFR: data, delay distribution and
/// settings, with cached per-day `ln(D!)` terms.
#[derive(Debug)]
pub struct DeathModel {
    deaths: DeathSeries,
    theta: DelayDistribution,
    region: RegionConfig,
    ln_fact: Vec<f64>,
    simulations: AtomicU64,
}

impl Clone for DeathModel {
    fn clone(&self) -> Self {
        Self {
            deaths: self.deaths.clone(),
            theta: self.theta.clone(),
            region: self.region.clone(),
            ln_fact: self.ln_fact.clone(),
            simulations: AtomicU64::new(self.simulations.load(Ordering::Relaxed)),
        }
    }
}

impl DeathModel {
    /// Deaths are truncated to the region's data end date.
    pub fn new(deaths: &DeathSeries, theta: DelayDistribution, region: RegionConfig) -> Result<Self> {
        let deaths = deaths.truncated_to(region.data_end_date)?;
        let ln_fact = deaths.daily_deaths.iter().map(|&d| ln_factorial(d)).collect();
        Ok(Self {
            deaths,
            theta,
            region,
            ln_fact,
            simulations: AtomicU64::new(0),
        })
    }

    pub fn deaths(&self) -> &DeathSeries {
        &self.deaths
    }

    pub fn theta(&self) -> &DelayDistribution {
        &self.theta
    }

    pub fn region(&self) -> &RegionConfig {
        &self.region
    }

    /// How many ODE solves `log_posterior` has performed.
    pub fn simulation_count(&self) -> u64 {
        self.simulations.load(Ordering::Relaxed)
    }

    pub fn log_likelihood(&self, params: &Params) -> Result<LogDensity> {
        self.simulations.fetch_add(1, Ordering::Relaxed);
        let horizon = self.deaths.last_day();
        let traj = match simulate_sir(
            params,
            self.region.population as f64,
            self.region.intervention_day(),
            horizon,
        ) {
            Ok(traj) => traj,
            // Epidemic starts after the last data day: every intensity is 0.
            Err(Error::EmptyTrajectory { .. }) => {
                let zeros = vec![0.0; self.deaths.len()];
                return Ok(sum_ln_pmf(&self.deaths.daily_deaths, &zeros, |k| self.ln_fact[k]));
            }
            Err(e) => return Err(e),
        };
        let lambda = death_intensities(
            traj.incidence(),
            &self.theta,
            params.p,
            self.deaths.first_day(),
            horizon,
        );
        Ok(sum_ln_pmf(&self.deaths.daily_deaths, &lambda, |k| self.ln_fact[k]))
    }

    /// Log prior plus log likelihood; skips the ODE solve when the prior is
    /// zero.
    pub fn log_posterior(&self, params: &Params) -> Result<LogDensity> {
        let prior = log_prior(params);
        if !prior.is_finite() {
            return Ok(prior);
        }
        Ok(self.log_likelihood(params)? + prior)
    }
}

pub fn log_posterior(
    params: &Params,
    deaths: &DeathSeries,
    theta: &DelayDistribution,
    region: &RegionConfig,
) -> Result<LogDensity> {
    DeathModel::new(deaths, theta.clone(), region.clone())?.log_posterior(params)
}
