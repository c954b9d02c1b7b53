//! Adaptive Metropolis over `(beta, gamma, t0, phi)`.
//!
//! Until `adapt_start` the proposal is a fixed diagonal Gaussian. From then
//! on the proposal covariance is `s_d * (C_t + eps * I)` with
//! `s_d = 2.38^2 / d`, where `C_t` is the empirical covariance of every state
//! visited so far (burn-in included), maintained with a single-pass update.

use std::fmt::Write as _;

use nalgebra::{Matrix4, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::calendar::epoch_day;
use crate::data_ingest::{DeathSeries, RegionConfig};
use crate::epi_model::{support, Params};
use crate::error::{Error, Result};
use crate::likelihood::LogDensity;

const DIM: usize = 4;

/// Pre-adaptation proposal standard deviations for `(beta, gamma, t0, phi)`.
pub const DEFAULT_STEP_SCALES: [f64; DIM] = [0.05, 0.01, 2.0, 0.05];
pub const DEFAULT_EPSILON: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub n_iterations: usize,
    pub adapt_start: usize,
    pub burn_in: usize,
    pub initial_step_scales: [f64; DIM],
    pub epsilon: f64,
    pub seed: u64,
    /// Keep burn-in draws in the returned chain.
    pub keep_burn_in: bool,
}

impl SamplerConfig {
    /// 50,000 iterations, adaptation from 10,000, 25,000 burn-in.
    pub fn standard(seed: u64) -> Self {
        Self::with_iterations(50_000, seed)
    }

    /// The doubled schedule used for the largest epidemics.
    pub fn heavy(seed: u64) -> Self {
        Self::with_iterations(100_000, seed)
    }

    /// Adaptation starts at one fifth and burn-in ends at half the run.
    pub fn with_iterations(n_iterations: usize, seed: u64) -> Self {
        Self {
            n_iterations,
            adapt_start: n_iterations / 5,
            burn_in: n_iterations / 2,
            initial_step_scales: DEFAULT_STEP_SCALES,
            epsilon: DEFAULT_EPSILON,
            seed,
            keep_burn_in: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_iterations == 0 {
            return Err(Error::Validation("n_iterations must be positive".into()));
        }
        if self.burn_in >= self.n_iterations || self.adapt_start >= self.n_iterations {
            return Err(Error::Validation(format!(
                "burn_in ({}) and adapt_start ({}) must be below n_iterations ({})",
                self.burn_in, self.adapt_start, self.n_iterations
            )));
        }
        if self
            .initial_step_scales
            .iter()
            .any(|&s| !(s > 0.0 && s.is_finite()))
        {
            return Err(Error::Validation("step scales must be positive".into()));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::Validation("epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Sampled states in iteration order.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    /// Iteration number of `draws[0]`.
    pub first_iteration: usize,
    pub draws: Vec<Params>,
    pub log_posteriors: Vec<f64>,
    /// Acceptance flag for every iteration from `accepted_from` on.
    pub accepted: Vec<bool>,
    pub accepted_from: usize,
    pub acceptance_rate: f64,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Acceptance rate over iterations `>= from`.
    pub fn acceptance_rate_since(&self, from: usize) -> f64 {
        let skip = from.saturating_sub(self.accepted_from);
        let tail = &self.accepted[skip.min(self.accepted.len())..];
        if tail.is_empty() {
            return 0.0;
        }
        tail.iter().filter(|&&a| a).count() as f64 / tail.len() as f64
    }

    /// Keeps iterations `>= iteration`.
    pub fn discard_before(&self, iteration: usize) -> Chain {
        let skip = iteration.saturating_sub(self.first_iteration).min(self.len());
        let skip_acc = iteration
            .saturating_sub(self.accepted_from)
            .min(self.accepted.len());
        let accepted = self.accepted[skip_acc..].to_vec();
        Chain {
            first_iteration: self.first_iteration + skip,
            draws: self.draws[skip..].to_vec(),
            log_posteriors: self.log_posteriors[skip..].to_vec(),
            acceptance_rate: rate(&accepted),
            accepted,
            accepted_from: self.accepted_from + skip_acc,
        }
    }

    /// Evenly spaced subset of at most `max_draws` draws.
    pub fn thinned(&self, max_draws: usize) -> Vec<Params> {
        let n = self.len();
        if n <= max_draws || max_draws == 0 {
            return self.draws.clone();
        }
        (0..max_draws)
            .map(|k| self.draws[k * n / max_draws])
            .collect()
    }

    /// Concatenates independent chains. Iteration numbering restarts per
    /// chain, so the pooled chain numbers draws sequentially from zero.
    pub fn pool(chains: &[Chain]) -> Result<Chain> {
        if chains.is_empty() {
            return Err(Error::EmptyChain);
        }
        let mut out = Chain {
            first_iteration: 0,
            draws: Vec::new(),
            log_posteriors: Vec::new(),
            accepted: Vec::new(),
            accepted_from: 0,
            acceptance_rate: 0.0,
        };
        for c in chains {
            out.draws.extend_from_slice(&c.draws);
            out.log_posteriors.extend_from_slice(&c.log_posteriors);
            out.accepted.extend_from_slice(&c.accepted);
        }
        out.acceptance_rate = rate(&out.accepted);
        Ok(out)
    }

    /// `iteration,beta,gamma,T0,phi,log_posterior,accepted`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,beta,gamma,T0,phi,log_posterior,accepted\n");
        for (k, (d, lp)) in self.draws.iter().zip(&self.log_posteriors).enumerate() {
            let it = self.first_iteration + k;
            let acc = it
                .checked_sub(self.accepted_from)
                .and_then(|i| self.accepted.get(i))
                .copied()
                .unwrap_or(false);
            let _ = writeln!(
                out,
                "{it},{},{},{},{},{lp},{}",
                d.beta,
                d.gamma,
                d.t0,
                d.phi,
                u8::from(acc)
            );
        }
        out
    }
}

fn rate(flags: &[bool]) -> f64 {
    if flags.is_empty() {
        0.0
    } else {
        flags.iter().filter(|&&a| a).count() as f64 / flags.len() as f64
    }
}

pub const CHAIN_HEADER: [&str; 7] = [
    "iteration",
    "beta",
    "gamma",
    "T0",
    "phi",
    "log_posterior",
    "accepted",
];

/// Reads a chain file written by [`Chain::to_csv`]. Rows must have
/// consecutive iteration numbers and finite values.
pub fn read_chain_csv(text: &str, p: f64) -> Result<Chain> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let found: Vec<&str> = header.iter().collect();
    if found != CHAIN_HEADER {
        return Err(Error::Header {
            expected: CHAIN_HEADER.join(","),
            found: found.join(","),
        });
    }

    let mut chain = Chain {
        first_iteration: 0,
        draws: Vec::new(),
        log_posteriors: Vec::new(),
        accepted: Vec::new(),
        accepted_from: 0,
        acceptance_rate: 0.0,
    };
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let bad = |what: &str| Error::Parse {
            line,
            message: format!("invalid {what}"),
        };
        if record.len() != CHAIN_HEADER.len() {
            return Err(bad("field count"));
        }
        let iteration: usize = record[0].parse().map_err(|_| bad("iteration"))?;
        let mut v = [0.0f64; 5];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = record[k + 1].parse().map_err(|_| bad(CHAIN_HEADER[k + 1]))?;
            if !slot.is_finite() {
                return Err(bad(CHAIN_HEADER[k + 1]));
            }
        }
        let accepted = match &record[6] {
            "0" => false,
            "1" => true,
            _ => return Err(bad("accepted flag")),
        };
        if chain.draws.is_empty() {
            chain.first_iteration = iteration;
            chain.accepted_from = iteration;
        } else if iteration != chain.first_iteration + chain.draws.len() {
            return Err(bad("iteration sequence"));
        }
        chain
            .draws
            .push(Params::from_array([v[0], v[1], v[2], v[3]], p));
        chain.log_posteriors.push(v[4]);
        chain.accepted.push(accepted);
    }
    chain.acceptance_rate = rate(&chain.accepted);
    Ok(chain)
}

/// Single-pass mean and covariance.
#[derive(Debug, Clone)]
pub struct RunningCovariance {
    n: usize,
    mean: Vector4<f64>,
    m2: Matrix4<f64>,
}

impl Default for RunningCovariance {
    fn default() -> Self {
        Self {
            n: 0,
            mean: Vector4::zeros(),
            m2: Matrix4::zeros(),
        }
    }
}

impl RunningCovariance {
    pub fn push(&mut self, x: &Vector4<f64>) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        let delta2 = x - self.mean;
        self.m2 += delta * delta2.transpose();
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> Vector4<f64> {
        self.mean
    }

    /// Unbiased sample covariance; zero with fewer than two points.
    pub fn covariance(&self) -> Matrix4<f64> {
        if self.n < 2 {
            Matrix4::zeros()
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }
}

/// Runs one adaptive Metropolis chain. Deterministic given `config.seed`.
pub fn run_chain<F>(mut target: F, init: Params, config: &SamplerConfig) -> Result<Chain>
where
    F: FnMut(&Params) -> Result<LogDensity>,
{
    config.validate()?;
    let mut current_lp = target(&init)?.value();
    if !current_lp.is_finite() {
        return Err(Error::SamplerInit);
    }

    let p = init.p;
    let scale = 2.38f64.powi(2) / DIM as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut current = Vector4::from(init.to_array());
    let mut history = RunningCovariance::default();
    let fixed = Matrix4::from_diagonal(&Vector4::from(config.initial_step_scales));

    let keep_from = if config.keep_burn_in { 0 } else { config.burn_in };
    let n_keep = config.n_iterations - keep_from;
    let mut chain = Chain {
        first_iteration: keep_from,
        draws: Vec::with_capacity(n_keep),
        log_posteriors: Vec::with_capacity(n_keep),
        accepted: Vec::with_capacity(config.n_iterations),
        accepted_from: 0,
        acceptance_rate: 0.0,
    };

    for iteration in 0..config.n_iterations {
        history.push(&current);
        let factor = if iteration < config.adapt_start {
            fixed
        } else {
            let sigma = (history.covariance() + Matrix4::identity() * config.epsilon) * scale;
            sigma
                .cholesky()
                .ok_or_else(|| {
                    Error::Sampler(format!(
                        "proposal covariance not positive definite at iteration {iteration}"
                    ))
                })?
                .l()
        };
        let z = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let proposal = current + factor * z;
        let proposal_params = Params::from_array(proposal.into(), p);
        let proposal_lp = target(&proposal_params)?.value();
        let log_u = rng.random::<f64>().ln();

        let accept = proposal_lp.is_finite() && log_u < proposal_lp - current_lp;
        if accept {
            current = proposal;
            current_lp = proposal_lp;
        }
        chain.accepted.push(accept);
        if iteration >= keep_from {
            chain.draws.push(Params::from_array(current.into(), p));
            chain.log_posteriors.push(current_lp);
        }
    }
    chain.acceptance_rate = rate(&chain.accepted);
    Ok(chain)
}

/// Starting point at the prior modes, with `t0` thirty days before the first
/// recorded death.
pub fn default_init(region: &RegionConfig, deaths: &DeathSeries) -> Params {
    let gamma = 1.0 / 6.4;
    let first_death = deaths
        .first_death_date()
        .unwrap_or_else(|| deaths.end_date());
    let t0 = ((epoch_day(first_death) - 30) as f64).clamp(support::T0.0, support::T0.1);
    Params {
        beta: 2.5 * gamma,
        gamma,
        t0,
        phi: 0.5,
        p: region.ifr,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::parse_date;
    use crate::likelihood::log_prior;

    fn std_normal(p: &Params) -> Result<LogDensity> {
        let v = p.to_array();
        Ok(LogDensity::new(-0.5 * v.iter().map(|x| x * x).sum::<f64>()))
    }

    fn origin() -> Params {
        Params::from_array([0.0; 4], 0.01)
    }

    #[test]
    fn config_validation() {
        assert!(SamplerConfig::standard(1).validate().is_ok());
        let mut c = SamplerConfig::standard(1);
        c.burn_in = c.n_iterations;
        assert!(c.validate().is_err());
        let mut c = SamplerConfig::standard(1);
        c.initial_step_scales[2] = 0.0;
        assert!(c.validate().is_err());
        let h = SamplerConfig::heavy(1);
        assert_eq!((h.n_iterations, h.adapt_start, h.burn_in), (100_000, 20_000, 50_000));
    }

    #[test]
    fn deterministic_for_seed() {
        let config = SamplerConfig::with_iterations(2_000, 9);
        let a = run_chain(std_normal, origin(), &config).unwrap();
        let b = run_chain(std_normal, origin(), &config).unwrap();
        assert_eq!(a, b);
        let c = run_chain(std_normal, origin(), &SamplerConfig { seed: 10, ..config }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn infinite_init_is_rejected() {
        let config = SamplerConfig::with_iterations(100, 1);
        let r = run_chain(
            |_| Ok(LogDensity::NEG_INFINITY),
            origin(),
            &config,
        );
        assert!(matches!(r, Err(Error::SamplerInit)));
    }

    #[test]
    fn box_support_confinement() {
        let inside = |v: &[f64; 4]| v.iter().all(|x| x.abs() <= 1.0);
        let config = SamplerConfig {
            initial_step_scales: [0.5; 4],
            keep_burn_in: true,
            ..SamplerConfig::with_iterations(5_000, 3)
        };
        let chain = run_chain(
            |p| {
                Ok(if inside(&p.to_array()) {
                    LogDensity::new(0.0)
                } else {
                    LogDensity::NEG_INFINITY
                })
            },
            origin(),
            &config,
        )
        .unwrap();
        assert!(chain.draws.iter().all(|d| inside(&d.to_array())));
        assert!(chain.log_posteriors.iter().all(|lp| lp.is_finite()));
        let mean_flag = chain.accepted.iter().filter(|&&a| a).count() as f64
            / chain.accepted.len() as f64;
        assert_eq!(chain.acceptance_rate, mean_flag);
        assert!(chain.acceptance_rate > 0.0 && chain.acceptance_rate < 1.0);
    }

    #[test]
    fn adaptation_starts_exactly_at_adapt_start() {
        // A target that records the spread of proposals around the current
        // point. Before adaptation every step has the fixed scales; the flat
        // target accepts everything so the current point is the last proposal.
        let config = SamplerConfig {
            n_iterations: 4_000,
            adapt_start: 2_000,
            burn_in: 0,
            initial_step_scales: [1.0, 1.0, 1.0, 1.0],
            epsilon: 1e-10,
            seed: 5,
            keep_burn_in: true,
        };
        let chain = run_chain(|_| Ok(LogDensity::new(0.0)), origin(), &config).unwrap();
        let steps = |range: std::ops::Range<usize>| -> f64 {
            let n = range.len() as f64;
            range
                .map(|k| {
                    let a = chain.draws[k].to_array();
                    let b = chain.draws[k + 1].to_array();
                    (b[0] - a[0]).powi(2)
                })
                .sum::<f64>()
                / n
        };
        // Pre-adaptation step variance is the fixed 1.0; after adaptation it
        // is s_d times the variance of a random walk history, which is much
        // larger than 1.
        let before = steps(0..1_999);
        assert!((before - 1.0).abs() < 0.1, "{before}");
        let after = steps(2_000..2_500);
        assert!(after > 10.0, "{after}");
        // The step into iteration adapt_start - 1 still uses the fixed scales.
        let a = chain.draws[1_998].to_array()[0];
        let b = chain.draws[1_999].to_array()[0];
        assert!((b - a).abs() < 5.0);
    }

    #[test]
    fn gaussian_recovery_smoke() {
        let config = SamplerConfig::with_iterations(20_000, 17);
        let chain = run_chain(std_normal, origin(), &config).unwrap();
        assert_eq!(chain.len(), 10_000);
        assert_eq!(chain.first_iteration, 10_000);
        for k in 0..4 {
            let mean = chain.draws.iter().map(|d| d.to_array()[k]).sum::<f64>() / chain.len() as f64;
            assert!(mean.abs() < 0.15, "coordinate {k}: {mean}");
        }
    }

    #[test]
    fn running_covariance_matches_two_pass() {
        let xs: Vec<Vector4<f64>> = (0..50)
            .map(|k| {
                let t = k as f64;
                Vector4::new(t.sin(), t.cos() * 2.0, t * 0.1, (t * 0.3).sin() + 1.0)
            })
            .collect();
        let mut rc = RunningCovariance::default();
        xs.iter().for_each(|x| rc.push(x));
        let mean = xs.iter().sum::<Vector4<f64>>() / xs.len() as f64;
        let cov = xs
            .iter()
            .map(|x| (x - mean) * (x - mean).transpose())
            .sum::<Matrix4<f64>>()
            / (xs.len() - 1) as f64;
        assert!((rc.covariance() - cov).abs().max() < 1e-12);
    }

    #[test]
    fn csv_round_trip_and_discard() {
        let config = SamplerConfig {
            keep_burn_in: true,
            ..SamplerConfig::with_iterations(300, 4)
        };
        let chain = run_chain(std_normal, origin(), &config).unwrap();
        let back = read_chain_csv(&chain.to_csv(), 0.01).unwrap();
        assert_eq!(back.draws, chain.draws);
        assert_eq!(back.accepted, chain.accepted);
        assert_eq!(back.acceptance_rate, chain.acceptance_rate);
        let tail = chain.discard_before(150);
        assert_eq!(tail.first_iteration, 150);
        assert_eq!(tail.len(), 150);
        assert_eq!(tail.draws[0], chain.draws[150]);
        assert_eq!(tail.accepted.len(), 150);
        let text = tail.to_csv();
        assert!(text.lines().nth(1).unwrap().starts_with("150,"));
        assert_eq!(read_chain_csv(&text, 0.01).unwrap().draws, tail.draws);
    }

    #[test]
    fn chain_csv_rejects_garbage() {
        assert!(read_chain_csv("a,b\n", 0.01).is_err());
        let head = CHAIN_HEADER.join(",");
        assert!(read_chain_csv(&format!("{head}\n0,1,2,3,4,5,2\n"), 0.01).is_err());
        assert!(read_chain_csv(&format!("{head}\n0,1,2,3,4,5,1\n2,1,2,3,4,5,1\n"), 0.01).is_err());
        assert!(read_chain_csv(&format!("{head}\n0,NaN,2,3,4,5,1\n"), 0.01).is_err());
    }

    #[test]
    fn default_init_rules() {
        let region = RegionConfig {
            region_id: "X".into(),
            population: 1_000_000,
            intervention_date: parse_date("2020-03-16").unwrap(),
            ifr: 0.01,
            data_end_date: parse_date("2020-04-17").unwrap(),
        };
        let mut deaths = vec![0u64; 20];
        deaths[9] = 1;
        let s = DeathSeries::new("X", parse_date("2020-03-01").unwrap(), deaths, vec![1; 20]).unwrap();
        let init = default_init(&region, &s);
        assert_eq!(init.t0, 39.0);
        assert!(log_prior(&init).is_finite());

        let mut early = vec![0u64; 5];
        early[0] = 2;
        let s = DeathSeries::new("X", parse_date("2020-01-20").unwrap(), early, vec![1; 5]).unwrap();
        let init = default_init(&region, &s);
        assert_eq!(init.t0, 0.0);
        assert!(log_prior(&init).is_finite());
    }
}
