//! Random small models and solver-independent oracles shared by the
//! integration tests.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use viab_core::kernel::FeedbackPolicy;
use viab_core::model::{
    ConstraintSets, ControlMap, DisturbanceLaw, Dynamics, Model, ModelDef, StateSpace, TimeGrid,
};

#[derive(Debug, Clone, Copy)]
pub struct Limits {
    pub states: usize,
    pub controls: usize,
    pub noise: usize,
    pub steps: usize,
}

pub const DESK: Limits = Limits {
    states: 4,
    controls: 2,
    noise: 3,
    steps: 3,
};

/// A random table model within `limits`. With `deterministic`, the
/// disturbance law is a single atom.
pub fn random_model(seed: u64, limits: Limits, deterministic: bool) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=limits.states);
    let steps = rng.gen_range(1..=limits.steps);
    let q = if deterministic {
        1
    } else {
        rng.gen_range(1..=limits.noise)
    };
    let t0 = rng.gen_range(-2..=2);

    let lists: Vec<Vec<Vec<Vec<f64>>>> = (0..steps)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let k = rng.gen_range(1..=limits.controls);
                    (0..k).map(|u| vec![u as f64]).collect()
                })
                .collect()
        })
        .collect();
    let body = lists
        .iter()
        .map(|stage| {
            stage
                .iter()
                .map(|controls| {
                    controls
                        .iter()
                        .map(|_| (0..q).map(|_| rng.gen_range(-1..n as i64)).collect())
                        .collect()
                })
                .collect()
        })
        .collect();
    let weights: Vec<f64> = (0..q).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let probs = weights.iter().map(|w| w / total).collect();
    let sets = (0..=steps)
        .map(|_| (0..n).filter(|_| rng.gen_bool(0.8)).collect())
        .collect();

    let def = ModelDef {
        time: TimeGrid::new(t0, t0 + steps as i64),
        states: StateSpace {
            dim: 1,
            points: (0..n).map(|i| vec![i as f64]).collect(),
        },
        controls: ControlMap::PerState { lists },
        noise: DisturbanceLaw {
            support: (0..q).map(|w| vec![w as f64]).collect(),
            probs,
        },
        dynamics: Dynamics::Table { body },
        constraints: ConstraintSets::per_stage_sets(sets),
    };
    Model::new(def).expect("generator emits valid models")
}

pub fn random_policy(model: &Model, seed: u64) -> FeedbackPolicy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let choices = (model.t0()..model.horizon())
        .map(|t| {
            (0..model.n_states())
                .map(|x| rng.gen_range(0..model.n_controls(t, x)))
                .collect()
        })
        .collect();
    FeedbackPolicy::from_choices(model.t0(), choices)
}

/// Exact success probability from `(t0, x0)` by summing over every scenario
/// of the product law.
pub fn scenario_enumeration(model: &Model, policy: &FeedbackPolicy, x0: usize) -> f64 {
    let steps = model.time().steps();
    let q = model.n_disturbances();
    let mut draws = vec![0usize; steps];
    let mut total = 0.0;
    loop {
        let mut prob = 1.0;
        let mut x = x0;
        let mut ok = model.in_constraint(model.t0(), x);
        for (k, &w) in draws.iter().enumerate() {
            let t = model.t0() + k as i64;
            prob *= model.probs()[w];
            x = model.step(t, x, policy.choose(t, x), w);
            ok &= model.in_constraint(t + 1, x);
        }
        if ok {
            total += prob;
        }
        let mut i = 0;
        loop {
            if i == steps {
                return total;
            }
            draws[i] += 1;
            if draws[i] < q {
                break;
            }
            draws[i] = 0;
            i += 1;
        }
    }
}

/// Classical viability kernel at `t0` for a single-atom model:
/// `K(T) = A(T)`, `K(t) = {x in A(t) : some u sends x into K(t+1)}`.
pub fn classical_kernel(model: &Model) -> Vec<usize> {
    assert_eq!(model.n_disturbances(), 1);
    let n = model.n_states();
    let mut k: Vec<bool> = (0..n)
        .map(|x| model.in_constraint(model.horizon(), x))
        .collect();
    for t in (model.t0()..model.horizon()).rev() {
        k = (0..n)
            .map(|x| {
                model.in_constraint(t, x)
                    && (0..model.n_controls(t, x)).any(|u| {
                        let y = model.step(t, x, u, 0);
                        y < n && k[y]
                    })
            })
            .collect();
    }
    (0..n).filter(|&x| k[x]).collect()
}
