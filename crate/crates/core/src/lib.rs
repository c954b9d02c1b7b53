//! Bayesian change-point SIR model fit to daily death counts.
//!
//! Deaths are modeled as Poisson with mean equal to the IFR times the
//! convolution of daily new infections with an infection-to-death delay
//! distribution. New infections come from an SIR model whose transmission
//! rate drops by a factor `phi` on the intervention date. The parameters
//! `(beta, gamma, t0, phi)` are sampled with adaptive Metropolis.

pub mod calendar;
pub mod data_ingest;
pub mod delay_dist;
pub mod diagnostics;
pub mod epi_model;
pub mod error;
pub mod likelihood;
pub mod plot;
pub mod posterior;
pub mod sampler;

pub use data_ingest::{load_region_config, parse_nyt_csv, parse_region_config, DeathSeries, RegionConfig};
pub use delay_dist::{build_time_to_death, DelayDistribution, PoissonGammaParams};
pub use epi_model::{effective_rt, r0, simulate_sir, Params, Trajectory};
pub use error::{Error, Result};
pub use likelihood::{log_likelihood, log_posterior, log_prior, DeathModel, LogDensity};
pub use posterior::{predictive_band, summarize, synthesize_data, undercount_series};
pub use sampler::{default_init, run_chain, Chain, SamplerConfig};
