//! Closed-loop simulation and Monte Carlo estimates of the success
//! probability.
//!
//! All randomness comes from seeds: a scenario is a pure function of its seed,
//! and sample `i` of an estimate uses [`derive_seed`]`(base_seed, i)`, so the
//! estimate does not depend on how samples are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::FeedbackPolicy;
use crate::model::{DisturbanceLaw, Model};

/// Two-sided standard normal quantiles.
pub const Z_95: f64 = 1.959_963_984_540_054;
pub const Z_99: f64 = 2.575_829_303_548_901;

/// Disturbance indices for the transitions `t0..T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub draws: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `x(t0..=T)`.
    pub states: Vec<usize>,
    /// `u(t0..T)`.
    pub controls: Vec<usize>,
    pub scenario: Scenario,
    pub success: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbabilityEstimate {
    pub mean: f64,
    pub n: u64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub seed: u64,
}

impl ProbabilityEstimate {
    /// `mean n ci_low ci_high seed`.
    pub fn report_line(&self) -> String {
        format!(
            "{:.16e} {} {:.16e} {:.16e} {}",
            self.mean, self.n, self.ci_low, self.ci_high, self.seed
        )
    }
}

/// SplitMix64 finalizer over `(base, index)`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct InverseCdf {
    cumulative: Vec<f64>,
    last: usize,
}

impl InverseCdf {
    fn new(law: &DisturbanceLaw) -> Self {
        let mut acc = 0.0;
        let cumulative = law
            .probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        let last = law.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        Self { cumulative, last }
    }

    fn draw(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.gen();
        self.cumulative
            .iter()
            .position(|&c| u < c)
            .map_or(self.last, |i| i.min(self.last))
    }
}

pub fn sample_scenario(noise: &DisturbanceLaw, horizon: usize, seed: u64) -> Scenario {
    let cdf = InverseCdf::new(noise);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Scenario {
        draws: (0..horizon).map(|_| cdf.draw(&mut rng)).collect(),
    }
}

/// Runs the closed loop along a given scenario.
pub fn simulate_scenario(
    model: &Model,
    policy: &FeedbackPolicy,
    x0: usize,
    scenario: Scenario,
) -> Result<Trajectory> {
    if x0 >= model.n_states() {
        return Err(Error::InvalidState(x0));
    }
    if scenario.draws.len() != model.time().steps() {
        return Err(Error::DimensionMismatch {
            what: "scenario",
            expected: model.time().steps(),
            found: scenario.draws.len(),
        });
    }
    let mut states = Vec::with_capacity(scenario.draws.len() + 1);
    let mut controls = Vec::with_capacity(scenario.draws.len());
    let mut x = x0;
    let mut success = model.in_constraint(model.t0(), x);
    states.push(x);
    for (k, &w) in scenario.draws.iter().enumerate() {
        let t = model.t0() + k as i64;
        let u = policy.choose(t, x);
        if u >= model.n_controls(t, x) {
            return Err(Error::InadmissibleControl { t, x, control: u });
        }
        x = model.step(t, x, u, w);
        success &= model.in_constraint(t + 1, x);
        controls.push(u);
        states.push(x);
    }
    Ok(Trajectory {
        states,
        controls,
        scenario,
        success,
    })
}

pub fn simulate(
    model: &Model,
    policy: &FeedbackPolicy,
    x0: usize,
    seed: u64,
) -> Result<Trajectory> {
    let scenario = sample_scenario(model.noise(), model.time().steps(), seed);
    simulate_scenario(model, policy, x0, scenario)
}

/// Wilson score interval for `successes` out of `n`.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    let n_f = n as f64;
    let phat = successes as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let center = (phat + z2 / (2.0 * n_f)) / denom;
    let half = z / denom * (phat * (1.0 - phat) / n_f + z2 / (4.0 * n_f * n_f)).sqrt();
    let low = (center - half).clamp(0.0, 1.0).min(phat);
    let high = (center + half).clamp(0.0, 1.0).max(phat);
    (low, high)
}

/// Fraction of `n` independent closed-loop runs that stay viable, with a 95%
/// Wilson interval.
pub fn estimate_probability(
    model: &Model,
    policy: &FeedbackPolicy,
    x0: usize,
    n: u64,
    base_seed: u64,
) -> Result<ProbabilityEstimate> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "sample count must be at least 1".into(),
        ));
    }
    if x0 >= model.n_states() {
        return Err(Error::InvalidState(x0));
    }
    policy.check_admissible(model)?;
    let successes: u64 = (0..n)
        .into_par_iter()
        .map(|i| {
            simulate(model, policy, x0, derive_seed(base_seed, i)).map(|tr| u64::from(tr.success))
        })
        .sum::<Result<u64>>()?;
    let (ci_low, ci_high) = wilson_interval(successes, n, Z_95);
    Ok(ProbabilityEstimate {
        mean: successes as f64 / n as f64,
        n,
        ci_low,
        ci_high,
        seed: base_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::solve;
    use crate::kernel::{select_feedback, TieBreak};
    use crate::model::{three_state_example, three_state_example_def};

    #[test]
    fn single_atom_law() {
        let law = DisturbanceLaw {
            support: vec![vec![0.0]],
            probs: vec![1.0],
        };
        for seed in [0, 1, 99, u64::MAX] {
            assert_eq!(sample_scenario(&law, 7, seed).draws, vec![0; 7]);
        }
    }

    #[test]
    fn zero_probability_atoms_are_never_drawn() {
        let law = DisturbanceLaw {
            support: vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]],
            probs: vec![0.0, 0.5, 0.5, 0.0],
        };
        let s = sample_scenario(&law, 10_000, 5);
        assert!(s.draws.iter().all(|&d| d == 1 || d == 2));
    }

    #[test]
    fn frequencies_follow_the_law() {
        let m = three_state_example(0.01, 0, 1).unwrap();
        let s = sample_scenario(m.noise(), 1_000_000, 20_240_601);
        let zeros = s.draws.iter().filter(|&&d| d == 1).count() as f64 / 1e6;
        assert!((zeros - 0.98).abs() <= 0.001, "{zeros}");
    }

    #[test]
    fn scenarios_are_reproducible() {
        let m = three_state_example(0.2, 0, 1).unwrap();
        assert_eq!(
            sample_scenario(m.noise(), 50, 42),
            sample_scenario(m.noise(), 50, 42)
        );
        assert_ne!(
            sample_scenario(m.noise(), 50, 42),
            sample_scenario(m.noise(), 50, 43)
        );
    }

    #[test]
    fn deterministic_walk_from_boundary() {
        let mut def = three_state_example_def(0.1, 0, 3).unwrap();
        def.noise = DisturbanceLaw {
            support: vec![vec![0.0]],
            probs: vec![1.0],
        };
        let m = Model::new(def).unwrap();
        let (_, argmax) = solve(&m).unwrap();
        let fb = select_feedback(&argmax, &TieBreak::default());
        let tr = simulate(&m, &fb, 0, 7).unwrap();
        // -1 -> 0 (u=+1) -> -1 (u=-1) -> 0
        assert_eq!(tr.states, vec![0, 1, 0, 1]);
        assert_eq!(tr.controls, vec![1, 0, 1]);
        assert!(tr.success);
    }

    #[test]
    fn leaving_the_grid_fails_and_stays_in_sink() {
        let m = three_state_example(0.1, 0, 4).unwrap();
        let up = FeedbackPolicy::constant(&m, 1);
        let scenario = Scenario {
            draws: vec![2, 1, 0, 1],
        };
        let tr = simulate_scenario(&m, &up, 1, scenario).unwrap();
        assert_eq!(tr.states, vec![1, m.sink(), m.sink(), m.sink(), m.sink()]);
        assert!(!tr.success);
    }

    #[test]
    fn simulate_is_reproducible_and_checks_x0() {
        let m = three_state_example(0.3, 0, 10).unwrap();
        let fb = FeedbackPolicy::constant(&m, 0);
        assert_eq!(
            simulate(&m, &fb, 1, 9).unwrap(),
            simulate(&m, &fb, 1, 9).unwrap()
        );
        assert!(matches!(
            simulate(&m, &fb, m.sink(), 9),
            Err(Error::InvalidState(_))
        ));
    }

    #[test]
    fn wilson_bounds() {
        for (k, n) in [(0, 10), (10, 10), (3, 9), (1, 1), (500, 1000)] {
            let (lo, hi) = wilson_interval(k, n, Z_95);
            let phat = k as f64 / n as f64;
            assert!(0.0 <= lo && lo <= phat && phat <= hi && hi <= 1.0);
        }
        // textbook value: 0 successes in 10 at 95% -> upper ~0.2775
        let (_, hi) = wilson_interval(0, 10, Z_95);
        assert!((hi - 0.27753).abs() < 1e-4);
    }

    #[test]
    fn deterministic_estimate() {
        let mut def = three_state_example_def(0.1, 0, 5).unwrap();
        def.noise = DisturbanceLaw {
            support: vec![vec![0.0]],
            probs: vec![1.0],
        };
        let m = Model::new(def).unwrap();
        let fb = FeedbackPolicy::constant(&m, 1);
        let est = estimate_probability(&m, &fb, 0, 100, 3).unwrap();
        assert!(est.mean == 0.0 || est.mean == 1.0);
        assert!(est.ci_low <= est.mean && est.mean <= est.ci_high);
        assert!(estimate_probability(&m, &fb, 0, 0, 3).is_err());
    }
}
