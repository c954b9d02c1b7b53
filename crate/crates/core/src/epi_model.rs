//! Change-point SIR dynamics.
//!
//! Before the intervention day the force of infection is `beta * S * I / N`;
//! from the intervention day on it is `phi * beta * S * I / N`. Removal runs
//! at rate `gamma` throughout. The system is integrated with classic RK4 from
//! the real-valued start time `t0`, with steps aligned so every integer day
//! boundary is hit exactly. Daily new infections are the drop in `S` over
//! each day.

use std::fmt::Write as _;

use crate::calendar::date_of;
use crate::error::{Error, Result};

/// Support bounds of the prior, shared with the likelihood module.
pub mod support {
    pub const INFECTIOUS_PERIOD: (f64, f64) = (3.4, 9.4);
    pub const T0: (f64, f64) = (0.0, 50.0);
    pub const PHI: (f64, f64) = (0.01, 0.99);
    /// `beta / gamma` must lie in this closed range.
    pub const R0: (f64, f64) = (1.0, 4.0);
}

/// Sampled parameters `(beta, gamma, t0, phi)` plus the fixed IFR `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    /// Contact rate per day.
    pub beta: f64,
    /// Removal rate per day.
    pub gamma: f64,
    /// Epidemic start, in days since 2020-01-01.
    pub t0: f64,
    /// Transmission multiplier after the intervention.
    pub phi: f64,
    /// Infection fatality rate.
    pub p: f64,
}

impl Params {
    pub fn to_array(&self) -> [f64; 4] {
        [self.beta, self.gamma, self.t0, self.phi]
    }

    pub fn from_array(v: [f64; 4], p: f64) -> Self {
        Self {
            beta: v[0],
            gamma: v[1],
            t0: v[2],
            phi: v[3],
            p,
        }
    }

    /// True when the sampled coordinates fall inside the prior's support.
    pub fn in_support(&self) -> bool {
        use support::*;
        if self.gamma.is_nan() || self.gamma <= 0.0 || !self.beta.is_finite() {
            return false;
        }
        let period = 1.0 / self.gamma;
        (INFECTIOUS_PERIOD.0..=INFECTIOUS_PERIOD.1).contains(&period)
            && self.beta >= R0.0 * self.gamma
            && self.beta <= R0.1 * self.gamma
            && (T0.0..=T0.1).contains(&self.t0)
            && self.phi > PHI.0
            && self.phi < PHI.1
    }
}

pub fn r0(params: &Params) -> f64 {
    params.beta / params.gamma
}

/// Post-intervention reproduction number at susceptible count `s`.
pub fn effective_rt(params: &Params, s: f64, population: f64) -> f64 {
    params.phi * params.beta * s / (population * params.gamma)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SirOptions {
    /// Maximum RK4 step in days; each day is split into `ceil(1 / step)` steps.
    pub step: f64,
    /// Infected count at `t0`.
    pub initial_infected: f64,
}

impl Default for SirOptions {
    fn default() -> Self {
        Self {
            step: 0.1,
            initial_infected: 1.0,
        }
    }
}

/// Daily infections indexed from `first_day`; zero outside the stored range.
#[derive(Debug, Clone, Copy)]
pub struct IncidenceView<'a> {
    pub first_day: i64,
    pub values: &'a [f64],
}

impl IncidenceView<'_> {
    pub fn at(&self, day: i64) -> f64 {
        if day < self.first_day {
            return 0.0;
        }
        self.values
            .get((day - self.first_day) as usize)
            .copied()
            .unwrap_or(0.0)
    }

    pub fn last_day(&self) -> i64 {
        self.first_day + self.values.len() as i64 - 1
    }
}

/// Compartment sizes at integer days `first_day..=last_day`, where
/// `first_day = ceil(t0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub population: f64,
    pub first_day: i64,
    pub s: Vec<f64>,
    pub i: Vec<f64>,
    pub r: Vec<f64>,
    /// `nu[k] = s[k] - s[k + 1]`, with the final entry using the state one
    /// day past `last_day`.
    pub nu: Vec<f64>,
}

impl Trajectory {
    pub fn last_day(&self) -> i64 {
        self.first_day + self.s.len() as i64 - 1
    }

    pub fn days(&self) -> impl Iterator<Item = i64> {
        self.first_day..=self.last_day()
    }

    fn index(&self, day: i64) -> Option<usize> {
        (day >= self.first_day && day <= self.last_day()).then(|| (day - self.first_day) as usize)
    }

    /// Susceptible count at `day`; the whole population before the epidemic
    /// starts, and the final value past the end.
    pub fn s_at(&self, day: i64) -> f64 {
        match self.index(day) {
            Some(k) => self.s[k],
            None if day < self.first_day => self.population,
            None => *self.s.last().expect("non-empty trajectory"),
        }
    }

    pub fn nu_at(&self, day: i64) -> f64 {
        self.incidence().at(day)
    }

    pub fn incidence(&self) -> IncidenceView<'_> {
        IncidenceView {
            first_day: self.first_day,
            values: &self.nu,
        }
    }

    /// Infections that have occurred by `day`, `N - S_day`.
    pub fn cumulative_infections(&self, day: i64) -> f64 {
        self.population - self.s_at(day)
    }

    /// `date,day,S,I,R,nu` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("date,day,S,I,R,nu\n");
        for (k, day) in self.days().enumerate() {
            let _ = writeln!(
                out,
                "{},{day},{},{},{},{}",
                date_of(day),
                self.s[k],
                self.i[k],
                self.r[k],
                self.nu[k]
            );
        }
        out
    }
}

#[derive(Clone, Copy)]
struct State {
    s: f64,
    i: f64,
    r: f64,
}

impl State {
    fn axpy(self, h: f64, d: State) -> State {
        State {
            s: self.s + h * d.s,
            i: self.i + h * d.i,
            r: self.r + h * d.r,
        }
    }

    fn is_finite(&self) -> bool {
        self.s.is_finite() && self.i.is_finite() && self.r.is_finite()
    }
}

struct Rhs {
    gamma: f64,
    inv_n: f64,
}

impl Rhs {
    fn eval(&self, beta: f64, x: State) -> State {
        let infection = beta * x.s * x.i * self.inv_n;
        let removal = self.gamma * x.i;
        State {
            s: -infection,
            i: infection - removal,
            r: removal,
        }
    }

    fn rk4(&self, beta: f64, x: State, h: f64) -> State {
        let k1 = self.eval(beta, x);
        let k2 = self.eval(beta, x.axpy(0.5 * h, k1));
        let k3 = self.eval(beta, x.axpy(0.5 * h, k2));
        let k4 = self.eval(beta, x.axpy(h, k3));
        State {
            s: x.s + h / 6.0 * (k1.s + 2.0 * k2.s + 2.0 * k3.s + k4.s),
            i: x.i + h / 6.0 * (k1.i + 2.0 * k2.i + 2.0 * k3.i + k4.i),
            r: x.r + h / 6.0 * (k1.r + 2.0 * k2.r + 2.0 * k3.r + k4.r),
        }
    }
}

/// Simulates with the default RK4 step (0.1 day) and one initial infection.
pub fn simulate_sir(
    params: &Params,
    population: f64,
    intervention_day: i64,
    horizon: i64,
) -> Result<Trajectory> {
    simulate_sir_with(params, population, intervention_day, horizon, SirOptions::default())
}

pub fn simulate_sir_with(
    params: &Params,
    population: f64,
    intervention_day: i64,
    horizon: i64,
    options: SirOptions,
) -> Result<Trajectory> {
    let t0 = params.t0;
    if !t0.is_finite() || (horizon as f64) < t0.ceil() {
        return Err(Error::EmptyTrajectory { horizon, t0 });
    }
    if options.step.is_nan() || options.step <= 0.0 {
        return Err(Error::Validation(format!("invalid RK4 step {}", options.step)));
    }
    let first_day = t0.ceil() as i64;
    let n_days = (horizon - first_day + 1) as usize;
    let t1 = intervention_day as f64;
    let rhs = Rhs {
        gamma: params.gamma,
        inv_n: 1.0 / population,
    };
    let rate_at = |t: f64| {
        if t >= t1 {
            params.phi * params.beta
        } else {
            params.beta
        }
    };

    let mut x = State {
        s: population - options.initial_infected,
        i: options.initial_infected,
        r: 0.0,
    };

    // Partial first segment from t0 up to the first integer day.
    let lead = first_day as f64 - t0;
    if lead > 0.0 {
        let n = (lead / options.step - 1e-9).ceil().max(1.0) as usize;
        let h = lead / n as f64;
        for k in 0..n {
            x = rhs.rk4(rate_at(t0 + k as f64 * h), x, h);
        }
    }

    let per_day = (1.0 / options.step - 1e-9).ceil().max(1.0) as usize;
    let h = 1.0 / per_day as f64;
    let mut s = Vec::with_capacity(n_days);
    let mut i = Vec::with_capacity(n_days);
    let mut r = Vec::with_capacity(n_days);
    let mut nu = Vec::with_capacity(n_days);
    for d in 0..n_days {
        if !x.is_finite() {
            return Err(Error::Integration(first_day as f64 + d as f64));
        }
        s.push(x.s);
        i.push(x.i);
        r.push(x.r);
        let day_start = (first_day + d as i64) as f64;
        let before = x.s;
        for k in 0..per_day {
            x = rhs.rk4(rate_at(day_start + k as f64 * h), x, h);
        }
        nu.push(before - x.s);
    }
    if !x.is_finite() {
        return Err(Error::Integration(horizon as f64 + 1.0));
    }

    Ok(Trajectory {
        population,
        first_day,
        s,
        i,
        r,
        nu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Root of `z = 1 - exp(-r0 z)` in (0, 1] by bisection.
    fn final_size_root(r0: f64) -> f64 {
        let f = |z: f64| z - 1.0 + (-r0 * z).exp();
        let (mut lo, mut hi) = (1e-6, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn no_intervention(beta: f64, gamma: f64) -> Params {
        Params {
            beta,
            gamma,
            t0: 0.0,
            phi: 1.0,
            p: 0.01,
        }
    }

    #[test]
    fn final_size_matches_root() {
        let z = final_size_root(2.5);
        assert!((z - 0.8926).abs() < 1e-4, "oracle root {z}");
        let traj = simulate_sir(&no_intervention(0.5, 0.2), 1e6, 10_000, 500).unwrap();
        let k = traj.s.len() - 1;
        let removed = traj.r[k] / traj.population;
        assert!(traj.i[k] < 1.0);
        assert!((removed - z).abs() < 1e-3, "R_inf/N {removed} vs {z}");
    }

    #[test]
    fn no_transmission_stays_put() {
        let p = Params {
            beta: 0.5,
            gamma: 0.2,
            t0: 10.0,
            phi: 0.0,
            p: 0.01,
        };
        let traj = simulate_sir(&p, 1e6, 10, 100).unwrap();
        assert!(traj.s.iter().all(|&s| s == 1e6 - 1.0));
        assert!(traj.nu.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn disease_free_equilibrium() {
        let opts = SirOptions {
            initial_infected: 0.0,
            ..SirOptions::default()
        };
        let traj = simulate_sir_with(&no_intervention(0.5, 0.2), 1e5, 1000, 60, opts).unwrap();
        assert!(traj.s.iter().all(|&s| s == 1e5));
        assert!(traj.i.iter().all(|&i| i == 0.0));
        assert!(traj.r.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn r0_and_rt() {
        let p = no_intervention(0.5, 0.2);
        assert_eq!(r0(&p), 2.5);
        assert_eq!(r0(&no_intervention(0.3, 0.3)), 1.0);
        assert_eq!(effective_rt(&p, 100.0, 100.0), 2.5);
        let q = Params {
            beta: 0.5,
            gamma: 0.25,
            t0: 0.0,
            phi: 0.5,
            p: 0.01,
        };
        assert!((effective_rt(&q, 90.0, 100.0) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn empty_horizon() {
        let p = Params {
            t0: 20.5,
            ..no_intervention(0.5, 0.2)
        };
        assert!(matches!(
            simulate_sir(&p, 1e6, 50, 20),
            Err(Error::EmptyTrajectory { .. })
        ));
        let traj = simulate_sir(&p, 1e6, 50, 21).unwrap();
        assert_eq!(traj.first_day, 21);
        assert_eq!(traj.s.len(), 1);
    }

    #[test]
    fn continuity_at_change_point() {
        let base = Params {
            beta: 0.4,
            gamma: 1.0 / 6.4,
            t0: 3.3,
            phi: 0.3,
            p: 0.01,
        };
        let with = simulate_sir(&base, 1e7, 60, 120).unwrap();
        let without = simulate_sir(&base, 1e7, 10_000, 120).unwrap();
        let k = (60 - with.first_day) as usize;
        // Identical up to and including the change-point day.
        assert_eq!(with.s[k], without.s[k]);
        assert_eq!(with.i[k], without.i[k]);
        assert!(with.nu[k] < without.nu[k]);
        let jump = (with.s[k + 1] - with.s[k]).abs();
        assert!(jump <= with.nu[k] + 1e-9);
    }

    #[test]
    fn step_halving() {
        let p = Params {
            beta: 0.5,
            gamma: 1.0 / 6.4,
            t0: 12.7,
            phi: 0.4,
            p: 0.01,
        };
        let a = simulate_sir(&p, 1e7, 75, 140).unwrap();
        let b = simulate_sir_with(
            &p,
            1e7,
            75,
            140,
            SirOptions {
                step: 0.05,
                ..SirOptions::default()
            },
        )
        .unwrap();
        for (x, y) in a.s.iter().zip(&b.s) {
            assert!((x - y).abs() / y < 1e-4);
        }
    }

    fn support_params() -> impl Strategy<Value = Params> {
        (3.4f64..9.4, 1.0f64..4.0, 0.0f64..50.0, 0.011f64..0.989).prop_map(
            |(period, ratio, t0, phi)| {
                let gamma = 1.0 / period;
                Params {
                    beta: ratio * gamma,
                    gamma,
                    t0,
                    phi,
                    p: 0.01,
                }
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn conservation_and_monotonicity(
            params in support_params(),
            t1 in 40i64..100,
            n in 1e5f64..4e7,
        ) {
            let traj = simulate_sir(&params, n, t1, 160).unwrap();
            prop_assert!(params.in_support());
            for k in 0..traj.s.len() {
                let total = traj.s[k] + traj.i[k] + traj.r[k];
                prop_assert!((total - n).abs() <= 1e-6 * n);
                prop_assert!(traj.i[k] >= 0.0);
                prop_assert!(traj.nu[k] >= 0.0);
                if k + 1 < traj.s.len() {
                    prop_assert!(traj.s[k + 1] <= traj.s[k]);
                    prop_assert!(traj.r[k + 1] >= traj.r[k]);
                    prop_assert_eq!(traj.nu[k], traj.s[k] - traj.s[k + 1]);
                }
            }
        }
    }
}
