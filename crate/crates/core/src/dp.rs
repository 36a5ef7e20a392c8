//! Backward induction for the maximal viability probability.
//!
//! ```text
//! V(T, x) = 1_{A(T)}(x)
//! V(t, x) = max_{u in B(t,x)} sum_i p_i * 1_{A(t)}(x) * V(t+1, f(t, x, u, w_i))
//! ```
//!
//! The full table over all stages is kept, since kernels and feedbacks are
//! queried at every stage.

use crate::error::{Error, Result};
use crate::kernel::FeedbackPolicy;
use crate::model::Model;

/// Controls within this absolute distance of the stage maximum are all
/// reported as maximizers.
pub const ARGMAX_TOL: f64 = 1e-12;

/// Enumeration limit for [`brute_force_value`].
pub const ENUMERATION_LIMIT: f64 = 1e6;

/// `V(t, ·)` indexed by state, sink last.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSlice {
    pub stage: i64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    t0: i64,
    slices: Vec<ValueSlice>,
}

impl ValueFunction {
    /// Assembles a table from slices for consecutive stages `t0..=T`.
    pub fn from_slices(slices: Vec<ValueSlice>) -> Result<Self> {
        let Some(first) = slices.first() else {
            return Err(Error::Format("value function has no stages".into()));
        };
        let t0 = first.stage;
        let width = first.values.len();
        for (k, s) in slices.iter().enumerate() {
            if s.stage != t0 + k as i64 {
                return Err(Error::StageMismatch {
                    expected: t0 + k as i64,
                    found: s.stage,
                });
            }
            if s.values.len() != width {
                return Err(Error::Format(format!(
                    "stage {} has {} states, expected {width}",
                    s.stage,
                    s.values.len()
                )));
            }
        }
        Ok(Self { t0, slices })
    }

    pub fn t0(&self) -> i64 {
        self.t0
    }

    pub fn horizon(&self) -> i64 {
        self.t0 + self.slices.len() as i64 - 1
    }

    /// Number of states including the sink.
    pub fn width(&self) -> usize {
        self.slices[0].values.len()
    }

    pub fn slices(&self) -> &[ValueSlice] {
        &self.slices
    }

    pub fn slice(&self, t: i64) -> Result<&ValueSlice> {
        self.check_stage(t)?;
        Ok(&self.slices[(t - self.t0) as usize])
    }

    /// `V(t, x)`; panics when `t` or `x` is out of range.
    pub fn value(&self, t: i64, x: usize) -> f64 {
        self.slices[(t - self.t0) as usize].values[x]
    }

    pub(crate) fn check_stage(&self, t: i64) -> Result<()> {
        if t < self.t0 || t > self.horizon() {
            return Err(Error::StageOutOfRange {
                t,
                t0: self.t0,
                horizon: self.horizon(),
            });
        }
        Ok(())
    }
}

/// Maximizing control indices for every `(t, x)`, `t in t0..T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArgmaxPolicy {
    t0: i64,
    sets: Vec<Vec<Vec<usize>>>,
}

impl ArgmaxPolicy {
    pub fn from_sets(t0: i64, sets: Vec<Vec<Vec<usize>>>) -> Self {
        Self { t0, sets }
    }

    pub fn t0(&self) -> i64 {
        self.t0
    }

    /// Number of decision stages, `T - t0`.
    pub fn steps(&self) -> usize {
        self.sets.len()
    }

    /// Number of states including the sink.
    pub fn width(&self) -> usize {
        self.sets.first().map_or(0, Vec::len)
    }

    /// The argmax set at `(t, x)`; empty outside `A(t)` and at the sink.
    pub fn viable(&self, t: i64, x: usize) -> &[usize] {
        &self.sets[(t - self.t0) as usize][x]
    }
}

pub fn terminal_slice(model: &Model) -> ValueSlice {
    let t = model.horizon();
    let values = (0..=model.n_states())
        .map(|x| if model.in_constraint(t, x) { 1.0 } else { 0.0 })
        .collect();
    ValueSlice { stage: t, values }
}

/// Expected next-stage value under control `u`, summed in support order.
fn expected_next(model: &Model, t: i64, x: usize, u: usize, next: &[f64]) -> f64 {
    model
        .successors(t, x, u)
        .iter()
        .zip(model.probs())
        .fold(0.0, |acc, (&y, &p)| acc + p * next[y])
}

/// One backward step: `V(t, ·)` and the argmax sets at `t` from `V(t+1, ·)`.
pub fn bellman_step(
    model: &Model,
    t: i64,
    next: &ValueSlice,
) -> Result<(ValueSlice, Vec<Vec<usize>>)> {
    if t < model.t0() || t >= model.horizon() {
        return Err(Error::StageOutOfRange {
            t,
            t0: model.t0(),
            horizon: model.horizon() - 1,
        });
    }
    if next.stage != t + 1 {
        return Err(Error::StageMismatch {
            expected: t + 1,
            found: next.stage,
        });
    }
    let width = model.n_states() + 1;
    if next.values.len() != width {
        return Err(Error::DimensionMismatch {
            what: "next value slice",
            expected: width,
            found: next.values.len(),
        });
    }
    let mut values = vec![0.0; width];
    let mut argmax = vec![Vec::new(); width];
    let mut scores = Vec::new();
    for x in 0..model.n_states() {
        if !model.in_constraint(t, x) {
            continue;
        }
        scores.clear();
        scores.extend(
            (0..model.n_controls(t, x)).map(|u| expected_next(model, t, x, u, &next.values)),
        );
        let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        values[x] = best;
        argmax[x] = scores
            .iter()
            .enumerate()
            .filter(|(_, &s)| best - s <= ARGMAX_TOL)
            .map(|(u, _)| u)
            .collect();
    }
    Ok((ValueSlice { stage: t, values }, argmax))
}

/// Full backward induction from the target down to `t0`.
pub fn solve(model: &Model) -> Result<(ValueFunction, ArgmaxPolicy)> {
    let steps = model.time().steps();
    let mut slices = Vec::with_capacity(steps + 1);
    let mut sets = Vec::with_capacity(steps);
    slices.push(terminal_slice(model));
    for t in (model.t0()..model.horizon()).rev() {
        let (slice, argmax) = bellman_step(model, t, slices.last().expect("non-empty"))?;
        slices.push(slice);
        sets.push(argmax);
    }
    slices.reverse();
    sets.reverse();
    Ok((
        ValueFunction {
            t0: model.t0(),
            slices,
        },
        ArgmaxPolicy {
            t0: model.t0(),
            sets,
        },
    ))
}

/// Exact success probability of a fixed feedback from every `(t, x)`.
///
/// Same recursion as [`solve`] with the maximum replaced by the policy's
/// control.
pub fn evaluate_policy(model: &Model, policy: &FeedbackPolicy) -> Result<ValueFunction> {
    policy.check_admissible(model)?;
    let mut slices = vec![terminal_slice(model)];
    for t in (model.t0()..model.horizon()).rev() {
        let next = &slices.last().expect("non-empty").values;
        let values = (0..=model.n_states())
            .map(|x| {
                if x == model.sink() || !model.in_constraint(t, x) {
                    0.0
                } else {
                    expected_next(model, t, x, policy.choose(t, x), next)
                }
            })
            .collect();
        slices.push(ValueSlice { stage: t, values });
    }
    slices.reverse();
    Ok(ValueFunction {
        t0: model.t0(),
        slices,
    })
}

/// Number of Markov feedbacks, as a float so large models do not overflow.
pub fn policy_count(model: &Model) -> f64 {
    (model.t0()..model.horizon())
        .flat_map(|t| (0..model.n_states()).map(move |x| (t, x)))
        .map(|(t, x)| model.n_controls(t, x) as f64)
        .product()
}

/// `max over all Markov feedbacks` of the exact success probability, for
/// every initial state at `t0`. Sink excluded.
pub fn brute_force_values(model: &Model) -> Result<Vec<f64>> {
    let count = policy_count(model);
    if count > ENUMERATION_LIMIT {
        return Err(Error::EnumerationGuard(count));
    }
    let n = model.n_states();
    let radix: Vec<usize> = (model.t0()..model.horizon())
        .flat_map(|t| (0..n).map(move |x| (t, x)))
        .map(|(t, x)| model.n_controls(t, x))
        .collect();
    let mut digits = vec![0usize; radix.len()];
    let mut best = vec![f64::NEG_INFINITY; n];
    loop {
        let choices = digits.chunks(n.max(1)).map(<[usize]>::to_vec).collect();
        let policy = FeedbackPolicy::from_choices(model.t0(), choices);
        let table = evaluate_policy(model, &policy)?;
        for (b, x) in best.iter_mut().zip(0..n) {
            *b = b.max(table.value(model.t0(), x));
        }
        // odometer increment
        let mut i = 0;
        loop {
            if i == digits.len() {
                return Ok(best);
            }
            digits[i] += 1;
            if digits[i] < radix[i] {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}

/// Oracle for `V(t0, x0)` by enumerating every Markov feedback.
pub fn brute_force_value(model: &Model, x0: usize) -> Result<f64> {
    if x0 >= model.n_states() {
        return Err(Error::InvalidState(x0));
    }
    Ok(brute_force_values(model)?[x0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        three_state_example, three_state_example_def, BoxBounds, ConstraintSets, DisturbanceLaw,
    };

    fn deterministic_example(horizon: i64) -> Model {
        let mut def = three_state_example_def(0.1, 0, horizon).unwrap();
        def.noise = DisturbanceLaw {
            support: vec![vec![0.0]],
            probs: vec![1.0],
        };
        Model::new(def).unwrap()
    }

    #[test]
    fn terminal_is_target_indicator() {
        let m = three_state_example(0.01, 0, 40).unwrap();
        let s = terminal_slice(&m);
        assert_eq!(s.stage, 40);
        assert_eq!(s.values, vec![1.0, 1.0, 1.0, 0.0]);

        let mut def = three_state_example_def(0.01, 0, 2).unwrap();
        def.constraints =
            ConstraintSets::per_stage_sets(vec![vec![0, 1, 2], vec![0, 1, 2], vec![]]);
        assert_eq!(
            terminal_slice(&Model::new(def).unwrap()).values,
            vec![0.0; 4]
        );

        let mut def = three_state_example_def(0.01, 0, 2).unwrap();
        def.constraints = ConstraintSets::Box {
            stationary: Some(BoxBounds {
                lower: vec![0.0],
                upper: vec![10.0],
            }),
            per_stage: None,
        };
        let s = terminal_slice(&Model::new(def).unwrap());
        assert_eq!(&s.values[..3], &[0.0, 1.0, 1.0]);
    }

    #[test]
    fn last_step_of_example() {
        let p = 0.01;
        let m = three_state_example(p, 0, 40).unwrap();
        let (slice, argmax) = bellman_step(&m, 39, &terminal_slice(&m)).unwrap();
        assert_eq!(slice.values[0], 1.0);
        assert!((slice.values[1] - 0.99).abs() < 1e-15);
        assert_eq!(slice.values[2], 1.0);
        assert_eq!(slice.values[3], 0.0);
        // control index 0 is u = -1, index 1 is u = +1
        assert_eq!(argmax[0], vec![1]);
        assert_eq!(argmax[1], vec![0, 1]);
        assert_eq!(argmax[2], vec![0]);
        assert!(argmax[3].is_empty());
    }

    #[test]
    fn outside_constraint_is_zero() {
        let mut def = three_state_example_def(0.2, 0, 2).unwrap();
        def.constraints =
            ConstraintSets::per_stage_sets(vec![vec![0, 1, 2], vec![0, 2], vec![0, 1, 2]]);
        let m = Model::new(def).unwrap();
        let next = ValueSlice {
            stage: 2,
            values: vec![1.0, 1.0, 1.0, 0.0],
        };
        let (slice, argmax) = bellman_step(&m, 1, &next).unwrap();
        assert_eq!(slice.values[1], 0.0);
        assert!(argmax[1].is_empty());
    }

    #[test]
    fn stage_checks() {
        let m = three_state_example(0.2, 0, 3).unwrap();
        let term = terminal_slice(&m);
        assert!(matches!(
            bellman_step(&m, 1, &term),
            Err(Error::StageMismatch {
                expected: 2,
                found: 3
            })
        ));
        assert!(matches!(
            bellman_step(&m, 3, &term),
            Err(Error::StageOutOfRange { .. })
        ));
    }

    #[test]
    fn deterministic_values_are_binary() {
        let m = deterministic_example(6);
        let (vf, _) = solve(&m).unwrap();
        for s in vf.slices() {
            assert!(s.values.iter().all(|&v| v == 0.0 || v == 1.0));
        }
        let (slice, _) = bellman_step(&m, 5, &terminal_slice(&m)).unwrap();
        assert!(slice.values.iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn constant_policy_last_step() {
        let p = 0.01;
        let m = three_state_example(p, 0, 40).unwrap();
        let policy = FeedbackPolicy::constant(&m, 1);
        let table = evaluate_policy(&m, &policy).unwrap();
        assert!((table.value(39, 1) - (1.0 - p)).abs() < 1e-15);
        assert!((table.value(39, 2) - p).abs() < 1e-15);
        let (vf, _) = solve(&m).unwrap();
        for t in 0..=40 {
            for x in 0..4 {
                assert!(table.value(t, x) <= vf.value(t, x));
            }
        }
    }

    #[test]
    fn inadmissible_policy_is_rejected() {
        let m = three_state_example(0.1, 0, 2).unwrap();
        let policy = FeedbackPolicy::from_choices(0, vec![vec![0, 2, 0], vec![0, 0, 0]]);
        assert!(matches!(
            evaluate_policy(&m, &policy),
            Err(Error::InadmissibleControl { control: 2, .. })
        ));
    }

    #[test]
    fn brute_force_matches_two_step_example() {
        let p = 0.1;
        let m = three_state_example(p, 0, 2).unwrap();
        let (vf, _) = solve(&m).unwrap();
        let bf = brute_force_value(&m, 1).unwrap();
        assert!((bf - vf.value(0, 1)).abs() < 1e-12);
        // hand value from x = 0: u = -1 moves to -1 w.p. 1-2p and stays w.p. p,
        // so V = (1-2p) * 1 + p * (1-p)
        let hand = (1.0 - 2.0 * p) + p * (1.0 - p);
        assert!((bf - hand).abs() < 1e-12);
    }

    #[test]
    fn brute_force_one_step_deterministic() {
        let m = deterministic_example(1);
        let term = terminal_slice(&m);
        let (slice, _) = bellman_step(&m, 0, &term).unwrap();
        for x in 0..3 {
            assert_eq!(brute_force_value(&m, x).unwrap(), slice.values[x]);
        }
    }

    #[test]
    fn brute_force_guard() {
        let m = three_state_example(0.1, 0, 40).unwrap();
        assert!(matches!(
            brute_force_value(&m, 1),
            Err(Error::EnumerationGuard(_))
        ));
    }

    #[test]
    fn solve_is_deterministic() {
        let m = three_state_example(0.3, 0, 40).unwrap();
        let a = solve(&m).unwrap();
        let b = solve(&m).unwrap();
        assert_eq!(a, b);
    }
}
