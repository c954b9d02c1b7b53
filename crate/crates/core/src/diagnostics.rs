//! Chain diagnostics: effective sample size and Monte Carlo standard error.

/// Effective sample size using Geyer's initial positive sequence of
/// autocorrelation pairs.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let var = centered.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if var <= 0.0 {
        return n as f64;
    }
    let rho = |lag: usize| -> f64 {
        centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / (n as f64 * var)
    };

    let mut tau = -1.0;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = rho(lag) + rho(lag + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    (n as f64 / tau.max(1.0 / n as f64)).min(n as f64)
}

/// Monte Carlo standard error of the sample mean.
pub fn mcse_mean(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return f64::INFINITY;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / effective_sample_size(x)).sqrt()
}

/// Whether two chains' means differ by at most two combined standard errors.
pub fn means_agree(a: &[f64], b: &[f64]) -> bool {
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let se = (mcse_mean(a).powi(2) + mcse_mean(b).powi(2)).sqrt();
    (mean(a) - mean(b)).abs() <= 2.0 * se
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn iid_ess_is_close_to_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..5000).map(|_| rng.sample(StandardNormal)).collect();
        let ess = effective_sample_size(&x);
        assert!(ess > 4000.0, "{ess}");
    }

    #[test]
    fn ar1_ess_matches_theory() {
        // AR(1) with coefficient a has ESS ~ n (1 - a) / (1 + a).
        let a = 0.9;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut x = vec![0.0; 50_000];
        for k in 1..x.len() {
            x[k] = a * x[k - 1] + rng.sample::<f64, _>(StandardNormal);
        }
        let ess = effective_sample_size(&x);
        let expected = 50_000.0 * (1.0 - a) / (1.0 + a);
        assert!((ess / expected - 1.0).abs() < 0.25, "{ess} vs {expected}");
    }

    #[test]
    fn constant_series() {
        assert_eq!(effective_sample_size(&[1.0; 10]), 10.0);
    }
}
