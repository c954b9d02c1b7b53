//! Infection-to-death delay distribution.
//!
//! Each component delay (incubation, symptom onset to death) is a Gamma-mixed
//! Poisson count of days: a rate is drawn from `Gamma(shape = alpha, rate =
//! beta)` and the day count from `Poisson(rate)`. The total delay is the sum
//! of one draw from each. The discrete distribution is the empirical
//! frequency of the summed draws, truncated at its 99th percentile and
//! renormalized over the retained support.

use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};

use crate::error::{Error, Result};

pub const DEFAULT_DELAY_SAMPLES: usize = 100_000;
pub const MIN_DELAY_SAMPLES: usize = 10_000;
const TRUNCATION_QUANTILE: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoissonGammaParams {
    alpha: f64,
    beta: f64,
}

impl PoissonGammaParams {
    /// Incubation period, median about 5 days.
    pub const INCUBATION: Self = Self {
        alpha: 5.5,
        beta: 1.1,
    };
    /// Symptom onset to death, median about 18.5 days.
    pub const ONSET_TO_DEATH: Self = Self {
        alpha: 27.75,
        beta: 1.5,
    };

    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite() && beta > 0.0 && beta.is_finite()) {
            return Err(Error::Validation(format!(
                "Poisson-Gamma parameters must be positive, got alpha={alpha}, beta={beta}"
            )));
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mean(&self) -> f64 {
        self.alpha / self.beta
    }

    pub fn variance(&self) -> f64 {
        self.mean() + self.alpha / (self.beta * self.beta)
    }
}

/// One Gamma-mixed Poisson day count.
pub fn sample_poisson_gamma<R: Rng + ?Sized>(params: PoissonGammaParams, rng: &mut R) -> u64 {
    let gamma = Gamma::new(params.alpha, 1.0 / params.beta).expect("validated parameters");
    let rate: f64 = gamma.sample(rng);
    match Poisson::new(rate) {
        Ok(p) => p.sample(rng) as u64,
        // Rate underflowed to zero.
        Err(_) => 0,
    }
}

/// Discrete probability of death `s` days after infection, `s = 0..=m`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayDistribution {
    probs: Vec<f64>,
}

impl DelayDistribution {
    /// Wraps an explicit probability vector. Entries must be non-negative and
    /// sum to one within 1e-9.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|&p| !p.is_finite() || p < 0.0) {
            return Err(Error::Validation(
                "delay probabilities must be non-empty and non-negative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "delay probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Largest delay with (possibly) non-zero mass.
    pub fn max_delay(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn prob(&self, s: usize) -> f64 {
        self.probs.get(s).copied().unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(s, p)| s as f64 * p)
            .sum()
    }

    /// Two-column `day,probability` table.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("day,probability\n");
        for (s, p) in self.probs.iter().enumerate() {
            let _ = writeln!(out, "{s},{p}");
        }
        out
    }
}

/// Builds the infection-to-death distribution by Monte Carlo. Deterministic
/// for a given seed.
pub fn build_time_to_death(
    incubation: PoissonGammaParams,
    onset_to_death: PoissonGammaParams,
    n_samples: usize,
    seed: u64,
) -> Result<DelayDistribution> {
    if n_samples < MIN_DELAY_SAMPLES {
        return Err(Error::Validation(format!(
            "delay distribution needs at least {MIN_DELAY_SAMPLES} samples, got {n_samples}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples: Vec<u64> = (0..n_samples)
        .map(|_| {
            sample_poisson_gamma(incubation, &mut rng)
                + sample_poisson_gamma(onset_to_death, &mut rng)
        })
        .collect();
    samples.sort_unstable();

    let rank = (TRUNCATION_QUANTILE * n_samples as f64).ceil() as usize;
    let max_delay = samples[rank.max(1) - 1] as usize;

    let mut counts = vec![0u64; max_delay + 1];
    for &s in samples.iter().take_while(|&&s| s as usize <= max_delay) {
        counts[s as usize] += 1;
    }
    let kept: u64 = counts.iter().sum();
    let probs = counts
        .into_iter()
        .map(|c| c as f64 / kept as f64)
        .collect();
    Ok(DelayDistribution { probs })
}

/// The default distribution: incubation plus onset-to-death, 100,000 draws.
pub fn default_time_to_death(seed: u64) -> DelayDistribution {
    build_time_to_death(
        PoissonGammaParams::INCUBATION,
        PoissonGammaParams::ONSET_TO_DEATH,
        DEFAULT_DELAY_SAMPLES,
        seed,
    )
    .expect("default sample count is above the floor")
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Type-1 empirical quantile of a sorted sample.
    fn quantile(sorted: &[u64], q: f64) -> f64 {
        let rank = (q * sorted.len() as f64).ceil() as usize;
        sorted[rank.max(1) - 1] as f64
    }

    fn draws(params: PoissonGammaParams, n: usize, seed: u64) -> Vec<u64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v: Vec<u64> = (0..n).map(|_| sample_poisson_gamma(params, &mut rng)).collect();
        v.sort_unstable();
        v
    }

    #[test]
    fn onset_to_death_quantiles() {
        let v = draws(PoissonGammaParams::ONSET_TO_DEATH, 100_000, 1);
        let median = quantile(&v, 0.5);
        assert!((median - 18.5).abs() <= 1.0, "median {median}");
        assert!((quantile(&v, 0.25) - 15.0).abs() <= 1.0);
        assert!((quantile(&v, 0.75) - 22.0).abs() <= 1.0);
        let mean = v.iter().sum::<u64>() as f64 / v.len() as f64;
        assert!((mean - 18.5).abs() < 0.1);
        let var = v.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / v.len() as f64;
        let expected = PoissonGammaParams::ONSET_TO_DEATH.variance();
        assert!((var - expected).abs() / expected < 0.05, "var {var} vs {expected}");
    }

    #[test]
    fn incubation_quantiles() {
        let v = draws(PoissonGammaParams::INCUBATION, 100_000, 2);
        assert!((quantile(&v, 0.5) - 5.1).abs() <= 0.3);
        assert!((quantile(&v, 0.975) - 11.5).abs() <= 1.0);
    }

    #[test]
    fn vanishing_rate_puts_mass_at_zero() {
        let p = PoissonGammaParams::new(1e-6, 1.5).unwrap();
        let v = draws(p, 10_000, 3);
        assert!(v.iter().all(|&x| x == 0));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(PoissonGammaParams::new(0.0, 1.0).is_err());
        assert!(PoissonGammaParams::new(1.0, -1.0).is_err());
        assert!(PoissonGammaParams::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn default_distribution_shape() {
        let theta = default_time_to_death(7);
        let total: f64 = theta.probs().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(theta.probs().iter().all(|&p| p >= 0.0));
        assert!((30..=60).contains(&theta.max_delay()), "m = {}", theta.max_delay());
        assert!((theta.mean() - 23.5).abs() < 0.3, "mean {}", theta.mean());
    }

    #[test]
    fn deterministic_for_seed() {
        assert_eq!(default_time_to_death(11), default_time_to_death(11));
    }

    #[test]
    fn independent_seeds_agree() {
        let a = default_time_to_death(1);
        let b = default_time_to_death(2);
        let n = a.probs().len().max(b.probs().len());
        let max_diff = (0..n)
            .map(|s| (a.prob(s) - b.prob(s)).abs())
            .fold(0.0, f64::max);
        assert!(max_diff < 0.005, "max diff {max_diff}");
    }

    #[test]
    fn sample_floor() {
        let r = build_time_to_death(
            PoissonGammaParams::INCUBATION,
            PoissonGammaParams::ONSET_TO_DEATH,
            9_999,
            0,
        );
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn from_probs_validation() {
        assert!(DelayDistribution::from_probs(vec![0.5, 0.5]).is_ok());
        assert!(DelayDistribution::from_probs(vec![0.5, 0.6]).is_err());
        assert!(DelayDistribution::from_probs(vec![]).is_err());
        assert!(DelayDistribution::from_probs(vec![1.5, -0.5]).is_err());
    }
}
