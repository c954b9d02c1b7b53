use epifit_core::calendar::date_of;
use epifit_core::delay_dist::default_time_to_death;
use epifit_core::likelihood::death_intensities;
use epifit_core::{simulate_sir, synthesize_data, DeathModel, Params, RegionConfig};

fn truth() -> Params {
    let gamma = 1.0 / 6.4;
    Params { beta: 2.5 * gamma, gamma, t0: 20.0, phi: 0.4, p: 0.01 }
}

fn region() -> RegionConfig {
    RegionConfig {
        region_id: "Synthetic".into(),
        population: 10_000_000,
        intervention_date: date_of(80),
        ifr: 0.01,
        data_end_date: date_of(115),
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap()
}

#[test]
fn deaths_peak_about_the_delay_mean_after_infections() {
    let theta = default_time_to_death(1);
    let params = truth();
    let traj = simulate_sir(&params, 1e7, 80, 200).unwrap();
    let lambda = death_intensities(traj.incidence(), &theta, params.p, traj.first_day, 200);
    let lag = argmax(&lambda) as f64 - argmax(&traj.nu) as f64;
    assert!((lag - theta.mean()).abs() < 6.0, "lag {lag} vs mean delay {}", theta.mean());
}

#[test]
fn prior_violations_skip_the_simulation() {
    let theta = default_time_to_death(1);
    let data = synthesize_data(&truth(), &region(), &theta, 4).unwrap();
    let model = DeathModel::new(&data, theta, region()).unwrap();
    let outside = Params { phi: 1.2, ..truth() };
    assert!(!model.log_posterior(&outside).unwrap().is_finite());
    assert_eq!(model.simulation_count(), 0);
    assert!(model.log_posterior(&truth()).unwrap().is_finite());
    assert_eq!(model.simulation_count(), 1);
}

#[test]
fn truth_beats_a_distant_point() {
    let theta = default_time_to_death(1);
    let data = synthesize_data(&truth(), &region(), &theta, 5).unwrap();
    let model = DeathModel::new(&data, theta, region()).unwrap();
    let far = Params { beta: truth().beta * 1.3, phi: 0.7, ..truth() };
    assert!(model.log_posterior(&truth()).unwrap().value() > model.log_posterior(&far).unwrap().value());
}
