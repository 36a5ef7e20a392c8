//! Viability kernels as level sets of the value function, and feedback
//! selection from the argmax sets.

use crate::dp::{evaluate_policy, ArgmaxPolicy, ValueFunction};
use crate::error::{Error, Result};
use crate::model::Model;

/// `{x : V(t, x) >= beta}` at one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSlice {
    pub stage: i64,
    pub beta: f64,
    pub members: Vec<usize>,
}

impl KernelSlice {
    pub fn contains(&self, x: usize) -> bool {
        self.members.binary_search(&x).is_ok()
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta <= 1.0 {
        Ok(())
    } else {
        Err(Error::BetaOutOfRange(beta))
    }
}

/// Level set of `V(t, ·)` at confidence `beta`. The comparison is exact.
///
/// The sink always has value 0, so it is never a member.
pub fn kernel_slice(valuefn: &ValueFunction, t: i64, beta: f64) -> Result<KernelSlice> {
    check_beta(beta)?;
    let slice = valuefn.slice(t)?;
    let sink = slice.values.len() - 1;
    let members = slice.values[..sink]
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= beta)
        .map(|(x, _)| x)
        .collect();
    Ok(KernelSlice {
        stage: t,
        beta,
        members,
    })
}

/// A Markov feedback: one control index per `(t, x)` for `t in t0..T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeedbackPolicy {
    t0: i64,
    /// `choices[t - t0][x]`, grid states only.
    choices: Vec<Vec<usize>>,
}

impl FeedbackPolicy {
    pub fn from_choices(t0: i64, choices: Vec<Vec<usize>>) -> Self {
        Self { t0, choices }
    }

    /// Same control index everywhere, clamped to what is admissible.
    pub fn constant(model: &Model, control: usize) -> Self {
        let choices = (model.t0()..model.horizon())
            .map(|t| {
                (0..model.n_states())
                    .map(|x| control.min(model.n_controls(t, x) - 1))
                    .collect()
            })
            .collect();
        Self::from_choices(model.t0(), choices)
    }

    pub fn t0(&self) -> i64 {
        self.t0
    }

    pub fn steps(&self) -> usize {
        self.choices.len()
    }

    /// Control index at `(t, x)`; the sink's dummy control is 0.
    pub fn choose(&self, t: i64, x: usize) -> usize {
        self.choices[(t - self.t0) as usize]
            .get(x)
            .copied()
            .unwrap_or(0)
    }

    pub fn check_admissible(&self, model: &Model) -> Result<()> {
        if self.t0 != model.t0() || self.choices.len() != model.time().steps() {
            return Err(Error::InvalidParameter(format!(
                "policy covers stages {}..{}, model needs {}..{}",
                self.t0,
                self.t0 + self.choices.len() as i64,
                model.t0(),
                model.horizon()
            )));
        }
        for (k, row) in self.choices.iter().enumerate() {
            let t = self.t0 + k as i64;
            if row.len() != model.n_states() {
                return Err(Error::DimensionMismatch {
                    what: "policy stage",
                    expected: model.n_states(),
                    found: row.len(),
                });
            }
            for (x, &u) in row.iter().enumerate() {
                if u >= model.n_controls(t, x) {
                    return Err(Error::InadmissibleControl { t, x, control: u });
                }
            }
        }
        Ok(())
    }
}

/// How to pick one control out of a multi-element argmax set.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum TieBreak {
    #[default]
    Smallest,
    Largest,
    /// First listed control index present in the set; falls back to the
    /// smallest.
    Preference(Vec<usize>),
}

impl TieBreak {
    fn pick(&self, set: &[usize]) -> Option<usize> {
        match self {
            TieBreak::Smallest => set.iter().copied().min(),
            TieBreak::Largest => set.iter().copied().max(),
            TieBreak::Preference(order) => order
                .iter()
                .copied()
                .find(|u| set.contains(u))
                .or_else(|| set.iter().copied().min()),
        }
    }
}

/// One selection from the argmax sets.
///
/// States with an empty set (outside `A(t)`, or the sink) get control 0; their
/// value is 0 whatever is chosen.
pub fn select_feedback(argmax: &ArgmaxPolicy, tie_break: &TieBreak) -> FeedbackPolicy {
    let grid = argmax.width().saturating_sub(1);
    let choices = (0..argmax.steps())
        .map(|k| {
            let t = argmax.t0() + k as i64;
            (0..grid)
                .map(|x| tie_break.pick(argmax.viable(t, x)).unwrap_or(0))
                .collect()
        })
        .collect();
    FeedbackPolicy::from_choices(argmax.t0(), choices)
}

/// Whether `policy` keeps the path from `(t0, x0)` in the constraints with
/// probability at least `beta`.
pub fn viable_feedback_check(
    model: &Model,
    policy: &FeedbackPolicy,
    t0: i64,
    x0: usize,
    beta: f64,
) -> Result<bool> {
    if !model.time().contains(t0) {
        return Err(Error::StageOutOfRange {
            t: t0,
            t0: model.t0(),
            horizon: model.horizon(),
        });
    }
    if x0 > model.n_states() {
        return Err(Error::InvalidState(x0));
    }
    Ok(evaluate_policy(model, policy)?.value(t0, x0) >= beta)
}
