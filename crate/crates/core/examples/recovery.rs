//! Fits synthetic data generated at known parameters and prints recovery.

use std::time::Instant;

use epifit_core::calendar::date_of;
use epifit_core::delay_dist::default_time_to_death;
use epifit_core::posterior::{summarize, synthesize_data};
use epifit_core::{default_init, run_chain, DeathModel, Params, RegionConfig, SamplerConfig};

fn main() {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let theta = default_time_to_death(1);
    let gamma = 1.0 / 6.4;
    let truth = Params { beta: 2.5 * gamma, gamma, t0: 20.3, phi: 0.4, p: 0.01 };
    let t1 = 80;
    let region = RegionConfig {
        region_id: "Synthetic".into(),
        population: 10_000_000,
        intervention_date: date_of(t1),
        ifr: 0.01,
        data_end_date: date_of(t1 + 35),
    };
    for seed in 0..seeds {
        let start = Instant::now();
        let data = synthesize_data(&truth, &region, &theta, 100 + seed).unwrap();
        let model = DeathModel::new(&data, theta.clone(), region.clone()).unwrap();
        let init = default_init(&region, &data);
        let config = SamplerConfig::standard(seed);
        let chain = run_chain(|p| model.log_posterior(p), init, &config).unwrap();
        let row = summarize(&chain, &region, &data).unwrap();
        let phi: Vec<f64> = chain.draws.iter().map(|d| d.phi).collect();
        let phi_i = epifit_core::posterior::Interval::from_samples(&phi).unwrap();
        println!(
            "seed {seed}: R0 {} phi {} acc {:.3} post-adapt {:.3} total deaths {} in {:.1}s",
            row.r0, phi_i, chain.acceptance_rate, chain.acceptance_rate_since(config.adapt_start),
            data.daily_deaths.iter().sum::<u64>(), start.elapsed().as_secs_f64()
        );
    }
}
