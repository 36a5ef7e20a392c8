//! Controlled stochastic systems over a finite state space.
//!
//! A [`ModelDef`] is the plain description (it is also the JSON model file
//! schema). [`Model::new`] validates it and compiles the dynamics into a dense
//! transition table so the solvers never touch expressions or boxes again.
//!
//! Every state space carries one extra pseudo-state, the *sink*, with index
//! `points.len()`. Transitions leaving the grid land there, the sink is
//! absorbing, and it belongs to no constraint set.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{self, Ast, Bindings, Dims};

/// Tolerance on the total mass of a disturbance law.
pub const PROB_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub t0: i64,
    #[serde(rename = "T")]
    pub horizon: i64,
}

impl TimeGrid {
    pub fn new(t0: i64, horizon: i64) -> Self {
        Self { t0, horizon }
    }

    /// Number of transitions, `T - t0`.
    pub fn steps(&self) -> usize {
        (self.horizon - self.t0).max(0) as usize
    }

    pub fn contains(&self, t: i64) -> bool {
        (self.t0..=self.horizon).contains(&t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpace {
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
}

impl StateSpace {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn sink(&self) -> usize {
        self.points.len()
    }

    /// Maps a point to the grid cell containing it, or to the sink.
    ///
    /// The nearest grid point (Euclidean, ties to the smaller index) is
    /// accepted when every coordinate lies within half the minimal spacing of
    /// that axis. An axis with a single distinct value has zero spacing, so
    /// the coordinate must match exactly.
    pub fn project(&self, point: &[f64]) -> Result<usize> {
        if point.len() != self.dim {
            return Err(Error::DimensionMismatch {
                what: "point",
                expected: self.dim,
                found: point.len(),
            });
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in self.points.iter().enumerate() {
            let d2: f64 = p.iter().zip(point).map(|(a, b)| (a - b) * (a - b)).sum();
            if best.is_none_or(|(_, bd)| d2 < bd) {
                best = Some((i, d2));
            }
        }
        let Some((nearest, _)) = best else {
            return Ok(self.sink());
        };
        let spacing = self.axis_spacing();
        let inside = self.points[nearest]
            .iter()
            .zip(point)
            .zip(&spacing)
            .all(|((g, x), h)| (x - g).abs() <= h / 2.0);
        Ok(if inside { nearest } else { self.sink() })
    }

    /// Minimal gap between distinct coordinate values, per axis.
    pub fn axis_spacing(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|k| {
                let mut vals: Vec<f64> = self.points.iter().map(|p| p[k]).collect();
                vals.sort_by(f64::total_cmp);
                vals.dedup();
                vals.windows(2)
                    .map(|w| w[1] - w[0])
                    .fold(f64::INFINITY, f64::min)
            })
            .map(|h| if h.is_finite() { h } else { 0.0 })
            .collect()
    }

    /// Index of the grid point equal to `coords`, if any.
    pub fn find(&self, coords: &[f64]) -> Option<usize> {
        self.points.iter().position(|p| p.as_slice() == coords)
    }
}

/// Free-standing form of [`StateSpace::project`].
pub fn project_to_grid(states: &StateSpace, point: &[f64]) -> Result<usize> {
    states.project(point)
}

/// Admissible controls per stage and state.
///
/// A control index always refers to a position in the list returned for that
/// `(t, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", deny_unknown_fields)]
pub enum ControlMap {
    /// One list for every stage and state.
    #[serde(rename = "shared")]
    Shared { list: Vec<Vec<f64>> },
    /// `lists[t - t0][x]` for `t in t0..T`.
    #[serde(rename = "per_state")]
    PerState { lists: Vec<Vec<Vec<Vec<f64>>>> },
}

impl ControlMap {
    fn all_controls(&self) -> Box<dyn Iterator<Item = &Vec<f64>> + '_> {
        match self {
            ControlMap::Shared { list } => Box::new(list.iter()),
            ControlMap::PerState { lists } => Box::new(lists.iter().flatten().flatten()),
        }
    }

    fn list(&self, stage: usize, x: usize) -> Option<&[Vec<f64>]> {
        match self {
            ControlMap::Shared { list } => Some(list),
            ControlMap::PerState { lists } => lists.get(stage)?.get(x).map(Vec::as_slice),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceLaw {
    pub support: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
}

impl DisturbanceLaw {
    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", deny_unknown_fields)]
pub enum Dynamics {
    /// `body[t - t0][x][u][w]` is the next state index; `-1` is the sink.
    #[serde(rename = "table")]
    Table { body: Vec<Vec<Vec<Vec<i64>>>> },
    /// One expression per state coordinate, projected onto the grid.
    #[serde(rename = "expr")]
    Expr { body: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxBounds {
    fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }
}

/// Constraint sets `A(t)` for `t in t0..=T`; the stage `T` set is the target.
///
/// Exactly one of `stationary` or `per_stage` must be given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", deny_unknown_fields)]
pub enum ConstraintSets {
    #[serde(rename = "set")]
    Set {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stationary: Option<Vec<usize>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        per_stage: Option<Vec<Vec<usize>>>,
    },
    #[serde(rename = "box")]
    Box {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stationary: Option<BoxBounds>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        per_stage: Option<Vec<BoxBounds>>,
    },
}

impl ConstraintSets {
    pub fn stationary_set(indices: Vec<usize>) -> Self {
        ConstraintSets::Set {
            stationary: Some(indices),
            per_stage: None,
        }
    }

    pub fn per_stage_sets(sets: Vec<Vec<usize>>) -> Self {
        ConstraintSets::Set {
            stationary: None,
            per_stage: Some(sets),
        }
    }
}

/// Unvalidated model description; the serialized model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDef {
    pub time: TimeGrid,
    pub states: StateSpace,
    pub controls: ControlMap,
    pub noise: DisturbanceLaw,
    pub dynamics: Dynamics,
    pub constraints: ConstraintSets,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    TimeGrid,
    StateSpace,
    ControlMap,
    DisturbanceLaw,
    Dynamics,
    ConstraintSets,
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Component::TimeGrid => "TimeGrid",
            Component::StateSpace => "StateSpace",
            Component::ControlMap => "ControlMap",
            Component::DisturbanceLaw => "DisturbanceLaw",
            Component::Dynamics => "Dynamics",
            Component::ConstraintSets => "ConstraintSets",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub component: Component,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.component, self.message)
    }
}

struct Violations(Vec<Violation>);

impl Violations {
    fn push(&mut self, component: Component, message: impl Into<String>) {
        self.0.push(Violation {
            component,
            message: message.into(),
        });
    }
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl ModelDef {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| Error::ModelFile {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model definitions always serialize");
        s.push('\n');
        s
    }

    /// Control dimension, taken from the first listed control.
    pub fn control_dim(&self) -> usize {
        self.controls.all_controls().next().map_or(0, Vec::len)
    }

    pub fn noise_dim(&self) -> usize {
        self.noise.support.first().map_or(0, Vec::len)
    }

    /// Every invariant violation found; empty iff [`Model::new`] succeeds.
    pub fn validate(&self) -> Vec<Violation> {
        let mut v = Violations(Vec::new());
        self.check_time(&mut v);
        self.check_states(&mut v);
        self.check_controls(&mut v);
        self.check_noise(&mut v);
        self.check_constraints(&mut v);
        // Dynamics checks index into the other components.
        if v.0.is_empty() {
            if let Err(msg) = self.compile_transitions() {
                v.push(Component::Dynamics, msg);
            }
        } else {
            self.check_dynamics_shape(&mut v);
        }
        v.0
    }

    fn check_time(&self, v: &mut Violations) {
        if self.time.t0 >= self.time.horizon {
            v.push(
                Component::TimeGrid,
                format!("t0 = {} must be < T = {}", self.time.t0, self.time.horizon),
            );
        }
    }

    fn check_states(&self, v: &mut Violations) {
        let s = &self.states;
        if s.dim == 0 {
            v.push(Component::StateSpace, "dim must be at least 1");
        }
        if s.points.is_empty() {
            v.push(Component::StateSpace, "no grid points");
        }
        for (i, p) in s.points.iter().enumerate() {
            if p.len() != s.dim {
                v.push(
                    Component::StateSpace,
                    format!("point {i} has {} coordinates, expected {}", p.len(), s.dim),
                );
            } else if !all_finite(p) {
                v.push(Component::StateSpace, format!("point {i} is not finite"));
            }
        }
        for i in 0..s.points.len() {
            for j in 0..i {
                if s.points[i] == s.points[j] {
                    v.push(
                        Component::StateSpace,
                        format!("points {j} and {i} coincide"),
                    );
                }
            }
        }
    }

    fn check_controls(&self, v: &mut Violations) {
        let dim = self.control_dim();
        if self
            .controls
            .all_controls()
            .any(|c| c.len() != dim || !all_finite(c))
        {
            v.push(
                Component::ControlMap,
                format!("controls must all be finite vectors of dimension {dim}"),
            );
        }
        match &self.controls {
            ControlMap::Shared { list } => {
                if list.is_empty() {
                    v.push(Component::ControlMap, "admissible control list is empty");
                }
            }
            ControlMap::PerState { lists } => {
                if lists.len() != self.time.steps() {
                    v.push(
                        Component::ControlMap,
                        format!(
                            "per_state lists cover {} stages, expected {}",
                            lists.len(),
                            self.time.steps()
                        ),
                    );
                }
                for (k, stage) in lists.iter().enumerate() {
                    let t = self.time.t0 + k as i64;
                    if stage.len() != self.states.len() {
                        v.push(
                            Component::ControlMap,
                            format!(
                                "stage {t} lists {} states, expected {}",
                                stage.len(),
                                self.states.len()
                            ),
                        );
                    }
                    for (x, l) in stage.iter().enumerate() {
                        if l.is_empty() {
                            v.push(
                                Component::ControlMap,
                                format!("admissible control list is empty at t={t}, x={x}"),
                            );
                        }
                    }
                }
            }
        }
    }

    fn check_noise(&self, v: &mut Violations) {
        let law = &self.noise;
        if law.support.is_empty() {
            v.push(Component::DisturbanceLaw, "support is empty");
        }
        if law.probs.len() != law.support.len() {
            v.push(
                Component::DisturbanceLaw,
                format!(
                    "{} probabilities for {} support points",
                    law.probs.len(),
                    law.support.len()
                ),
            );
        }
        let dim = self.noise_dim();
        if law.support.iter().any(|w| w.len() != dim || !all_finite(w)) {
            v.push(
                Component::DisturbanceLaw,
                format!("support points must all be finite vectors of dimension {dim}"),
            );
        }
        if let Some(p) = law.probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            v.push(
                Component::DisturbanceLaw,
                format!("probability {p} is outside [0, 1]"),
            );
        }
        let total: f64 = law.probs.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            v.push(
                Component::DisturbanceLaw,
                format!("probabilities sum to {total}, not 1 (normalization)"),
            );
        }
    }

    fn check_constraints(&self, v: &mut Violations) {
        let n = self.states.len();
        let stages = self.time.steps() + 1;
        let check_set = |set: &[usize], v: &mut Violations| {
            if let Some(bad) = set.iter().find(|&&i| i >= n) {
                v.push(
                    Component::ConstraintSets,
                    format!("state index {bad} out of range (have {n} states)"),
                );
            }
        };
        let dim = self.states.dim;
        let check_box = |b: &BoxBounds, v: &mut Violations| {
            if b.lower.len() != dim || b.upper.len() != dim {
                v.push(
                    Component::ConstraintSets,
                    format!("box bounds must have dimension {dim}"),
                );
            }
        };
        let (has_stationary, per_stage_len) = match &self.constraints {
            ConstraintSets::Set {
                stationary,
                per_stage,
            } => {
                stationary.iter().for_each(|s| check_set(s, v));
                per_stage.iter().flatten().for_each(|s| check_set(s, v));
                (stationary.is_some(), per_stage.as_ref().map(Vec::len))
            }
            ConstraintSets::Box {
                stationary,
                per_stage,
            } => {
                stationary.iter().for_each(|b| check_box(b, v));
                per_stage.iter().flatten().for_each(|b| check_box(b, v));
                (stationary.is_some(), per_stage.as_ref().map(Vec::len))
            }
        };
        match (has_stationary, per_stage_len) {
            (true, None) => {}
            (false, Some(len)) if len == stages => {}
            (false, Some(len)) => v.push(
                Component::ConstraintSets,
                format!("per_stage has {len} entries, expected {stages} (t0..=T)"),
            ),
            _ => v.push(
                Component::ConstraintSets,
                "exactly one of `stationary` or `per_stage` is required",
            ),
        }
    }

    fn check_dynamics_shape(&self, v: &mut Violations) {
        match &self.dynamics {
            Dynamics::Table { body } if body.len() != self.time.steps() => v.push(
                Component::Dynamics,
                format!(
                    "table covers {} stages, expected {}",
                    body.len(),
                    self.time.steps()
                ),
            ),
            Dynamics::Expr { body } if body.len() != self.states.dim => v.push(
                Component::Dynamics,
                format!(
                    "{} expressions for state dimension {}",
                    body.len(),
                    self.states.dim
                ),
            ),
            _ => {}
        }
    }

    /// Builds the dense transition table. Assumes the other components are
    /// already valid.
    fn compile_transitions(&self) -> std::result::Result<Transitions, String> {
        let n = self.states.len();
        let sink = self.states.sink();
        let nw = self.noise.len();
        let steps = self.time.steps();
        let mut offsets = Vec::with_capacity(steps * n + 1);
        let mut next = Vec::new();
        let exprs = match &self.dynamics {
            Dynamics::Expr { body } => {
                if body.len() != self.states.dim {
                    return Err(format!(
                        "{} expressions for state dimension {}",
                        body.len(),
                        self.states.dim
                    ));
                }
                let dims = Dims::new(self.states.dim, self.control_dim(), self.noise_dim());
                let parsed = body
                    .iter()
                    .enumerate()
                    .map(|(k, src)| {
                        expr::parse(src, dims)
                            .map_err(|e| format!("expression for x{}: {e}", k + 1))
                    })
                    .collect::<std::result::Result<Vec<Ast>, _>>()?;
                Some(parsed)
            }
            Dynamics::Table { body } => {
                if body.len() != steps {
                    return Err(format!(
                        "table covers {} stages, expected {steps}",
                        body.len()
                    ));
                }
                None
            }
        };
        let mut image = vec![0.0; self.states.dim];
        for k in 0..steps {
            let t = self.time.t0 + k as i64;
            for x in 0..n {
                offsets.push(next.len());
                let controls = self.controls.list(k, x).unwrap_or(&[]);
                for (u, control) in controls.iter().enumerate() {
                    for w in 0..nw {
                        let target = match (&exprs, &self.dynamics) {
                            (Some(asts), _) => {
                                let env = Bindings {
                                    t: Some(t as f64),
                                    x: &self.states.points[x],
                                    u: control,
                                    w: &self.noise.support[w],
                                };
                                for (slot, ast) in image.iter_mut().zip(asts) {
                                    *slot = ast.eval(&env).map_err(|e| {
                                        format!(
                                            "evaluation failed at t={t}, x={x}, u={u}, w={w}: {e}"
                                        )
                                    })?;
                                }
                                self.states.project(&image).map_err(|e| e.to_string())?
                            }
                            (None, Dynamics::Table { body }) => {
                                let entry = body[k]
                                    .get(x)
                                    .and_then(|row| row.get(u))
                                    .and_then(|row| row.get(w))
                                    .ok_or_else(|| {
                                        format!("table has no entry for t={t}, x={x}, u={u}, w={w}")
                                    })?;
                                match *entry {
                                    -1 => sink,
                                    i if (0..n as i64).contains(&i) => i as usize,
                                    i => {
                                        return Err(format!(
                                            "table entry {i} at t={t}, x={x}, u={u}, w={w} is not a state index or -1"
                                        ))
                                    }
                                }
                            }
                            (None, Dynamics::Expr { .. }) => unreachable!(),
                        };
                        next.push(target);
                    }
                }
            }
        }
        offsets.push(next.len());
        Ok(Transitions { offsets, next })
    }

    fn membership(&self) -> Vec<Vec<bool>> {
        let n = self.states.len();
        let stages = self.time.steps() + 1;
        let row_from_set = |set: &[usize]| {
            let mut row = vec![false; n + 1];
            set.iter().for_each(|&i| row[i] = true);
            row
        };
        let row_from_box = |b: &BoxBounds| {
            let mut row: Vec<bool> = self.states.points.iter().map(|p| b.contains(p)).collect();
            row.push(false);
            row
        };
        match &self.constraints {
            ConstraintSets::Set {
                stationary: Some(s),
                ..
            } => vec![row_from_set(s); stages],
            ConstraintSets::Set {
                per_stage: Some(ps),
                ..
            } => ps.iter().map(|s| row_from_set(s)).collect(),
            ConstraintSets::Box {
                stationary: Some(b),
                ..
            } => vec![row_from_box(b); stages],
            ConstraintSets::Box {
                per_stage: Some(ps),
                ..
            } => ps.iter().map(row_from_box).collect(),
            _ => unreachable!("validated"),
        }
    }
}

/// Compiled dynamics: for each `(stage, x)`, a block of `controls × noise`
/// successor indices.
#[derive(Debug, Clone)]
struct Transitions {
    offsets: Vec<usize>,
    next: Vec<usize>,
}

/// A validated, immutable model.
#[derive(Debug, Clone)]
pub struct Model {
    def: ModelDef,
    transitions: Transitions,
    member: Vec<Vec<bool>>,
    sink_control: Vec<Vec<f64>>,
    sink_next: Vec<usize>,
}

impl Model {
    pub fn new(def: ModelDef) -> Result<Self> {
        let violations = def.validate();
        if !violations.is_empty() {
            return Err(Error::InvalidModel(violations));
        }
        let transitions = def.compile_transitions().expect("validated model compiles");
        let member = def.membership();
        let sink_control = vec![vec![0.0; def.control_dim()]];
        let sink_next = vec![def.states.sink(); def.noise.len()];
        Ok(Self {
            def,
            transitions,
            member,
            sink_control,
            sink_next,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::new(ModelDef::from_json(text)?)
    }

    pub fn def(&self) -> &ModelDef {
        &self.def
    }

    pub fn time(&self) -> TimeGrid {
        self.def.time
    }

    pub fn t0(&self) -> i64 {
        self.def.time.t0
    }

    pub fn horizon(&self) -> i64 {
        self.def.time.horizon
    }

    pub fn states(&self) -> &StateSpace {
        &self.def.states
    }

    /// Number of grid states, excluding the sink.
    pub fn n_states(&self) -> usize {
        self.def.states.len()
    }

    pub fn sink(&self) -> usize {
        self.def.states.sink()
    }

    pub fn noise(&self) -> &DisturbanceLaw {
        &self.def.noise
    }

    pub fn probs(&self) -> &[f64] {
        &self.def.noise.probs
    }

    pub fn n_disturbances(&self) -> usize {
        self.def.noise.len()
    }

    fn stage_index(&self, t: i64) -> usize {
        debug_assert!(self.def.time.contains(t));
        (t - self.def.time.t0) as usize
    }

    /// Admissible controls at `(t, x)` for `t in t0..T`. The sink gets a
    /// single dummy control.
    pub fn controls(&self, t: i64, x: usize) -> &[Vec<f64>] {
        if x == self.sink() {
            return &self.sink_control;
        }
        self.def
            .controls
            .list(self.stage_index(t), x)
            .expect("validated control map")
    }

    pub fn n_controls(&self, t: i64, x: usize) -> usize {
        if x == self.sink() {
            return 1;
        }
        let block = self.block(t, x);
        (block.end - block.start) / self.n_disturbances()
    }

    fn block(&self, t: i64, x: usize) -> std::ops::Range<usize> {
        let i = self.stage_index(t) * self.n_states() + x;
        self.transitions.offsets[i]..self.transitions.offsets[i + 1]
    }

    /// Successor states of `(t, x, u)`, one per disturbance in support order.
    pub fn successors(&self, t: i64, x: usize, u: usize) -> &[usize] {
        if x == self.sink() {
            return &self.sink_next;
        }
        let nw = self.n_disturbances();
        let block = self.block(t, x);
        let start = block.start + u * nw;
        assert!(
            start + nw <= block.end,
            "control {u} not admissible at t={t}, x={x}"
        );
        &self.transitions.next[start..start + nw]
    }

    /// `f(t, x, u, w)` as a state index.
    pub fn step(&self, t: i64, x: usize, u: usize, w: usize) -> usize {
        if x == self.sink() {
            return x;
        }
        self.successors(t, x, u)[w]
    }

    /// Membership of `x` in `A(t)`; never true for the sink.
    pub fn in_constraint(&self, t: i64, x: usize) -> bool {
        self.member[self.stage_index(t)][x]
    }

    /// Coordinates of a state, `None` for the sink.
    pub fn coords(&self, x: usize) -> Option<&[f64]> {
        self.def.states.points.get(x).map(Vec::as_slice)
    }
}

/// The scalar three-state example: `x(t+1) = x + u + w` on `{-1, 0, 1}`,
/// controls `{-1, 1}`, disturbances `{-1, 0, 1}` with probabilities
/// `(p, 1 - 2p, p)` and constraint `{-1, 0, 1}` at every stage.
pub fn three_state_example_def(p: f64, t0: i64, horizon: i64) -> Result<ModelDef> {
    if !(p > 0.0 && p < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "p = {p} must lie in (0, 1/2)"
        )));
    }
    if t0 >= horizon {
        return Err(Error::InvalidParameter(format!(
            "t0 = {t0} must be < T = {horizon}"
        )));
    }
    Ok(ModelDef {
        time: TimeGrid::new(t0, horizon),
        states: StateSpace {
            dim: 1,
            points: vec![vec![-1.0], vec![0.0], vec![1.0]],
        },
        controls: ControlMap::Shared {
            list: vec![vec![-1.0], vec![1.0]],
        },
        noise: DisturbanceLaw {
            support: vec![vec![-1.0], vec![0.0], vec![1.0]],
            probs: vec![p, 1.0 - 2.0 * p, p],
        },
        dynamics: Dynamics::Expr {
            body: vec!["x + u + w".into()],
        },
        constraints: ConstraintSets::stationary_set(vec![0, 1, 2]),
    })
}

pub fn three_state_example(p: f64, t0: i64, horizon: i64) -> Result<Model> {
    Model::new(three_state_example_def(p, t0, horizon)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[f64]) -> StateSpace {
        StateSpace {
            dim: 1,
            points: points.iter().map(|&p| vec![p]).collect(),
        }
    }

    #[test]
    fn example_is_valid() {
        for p in [0.01, 0.1, 0.3] {
            let def = three_state_example_def(p, 0, 40).unwrap();
            assert!(def.validate().is_empty(), "{:?}", def.validate());
        }
        let m = three_state_example(0.01, 0, 40).unwrap();
        assert_eq!(m.n_states() + 1, 4);
        assert_eq!(m.n_controls(0, 0), 2);
        assert_eq!(m.n_disturbances(), 3);
        assert_eq!(m.probs(), &[0.01, 0.98, 0.01]);
    }

    #[test]
    fn example_noise_substitution() {
        let m = three_state_example(0.25, 0, 3).unwrap();
        assert_eq!(m.probs(), &[0.25, 0.5, 0.25]);
    }

    #[test]
    fn example_dynamics_leave_grid_to_sink() {
        let m = three_state_example(0.1, 0, 5).unwrap();
        // x = 1 (index 2), u = +1 (index 1), w = +1 (index 2)
        assert_eq!(m.step(0, 2, 1, 2), m.sink());
        // x = -1, u = +1, w = 0 lands on 0
        assert_eq!(m.step(0, 0, 1, 1), 1);
        assert_eq!(m.step(3, m.sink(), 0, 0), m.sink());
        assert!(!m.in_constraint(0, m.sink()));
    }

    #[test]
    fn example_rejects_bad_p() {
        for p in [0.0, 0.5, 0.6, -0.1, f64::NAN] {
            assert!(matches!(
                three_state_example_def(p, 0, 3),
                Err(Error::InvalidParameter(_))
            ));
        }
        assert!(three_state_example_def(0.1, 3, 3).is_err());
    }

    #[test]
    fn unnormalized_noise_is_one_violation() {
        let mut def = three_state_example_def(0.1, 0, 3).unwrap();
        def.noise.probs = vec![0.1, 0.79, 0.1];
        let v = def.validate();
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].component, Component::DisturbanceLaw);
        assert!(v[0].message.contains("normalization"));
    }

    #[test]
    fn empty_control_list_is_one_violation() {
        let mut def = three_state_example_def(0.1, 0, 2).unwrap();
        let list = vec![vec![-1.0], vec![1.0]];
        let mut lists = vec![vec![list.clone(); 3]; 2];
        lists[1][2].clear();
        def.controls = ControlMap::PerState { lists };
        let v = def.validate();
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].component, Component::ControlMap);
    }

    #[test]
    fn other_violations() {
        let mut def = three_state_example_def(0.1, 0, 2).unwrap();
        def.states.points[2] = vec![0.0];
        def.constraints = ConstraintSets::stationary_set(vec![0, 7]);
        let v = def.validate();
        let comps: Vec<_> = v.iter().map(|v| v.component).collect();
        assert!(comps.contains(&Component::StateSpace));
        assert!(comps.contains(&Component::ConstraintSets));

        let mut def = three_state_example_def(0.1, 0, 2).unwrap();
        def.dynamics = Dynamics::Expr {
            body: vec!["x / (u - u)".into()],
        };
        let v = def.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].component, Component::Dynamics);

        let mut def = three_state_example_def(0.1, 0, 2).unwrap();
        def.dynamics = Dynamics::Table {
            body: vec![vec![vec![vec![0, 1, 5]; 2]; 3]; 2],
        };
        assert_eq!(def.validate()[0].component, Component::Dynamics);
    }

    #[test]
    fn projection_examples() {
        let g = line(&[-1.0, 0.0, 1.0]);
        assert_eq!(g.project(&[0.0]).unwrap(), 1);
        assert_eq!(g.project(&[2.0]).unwrap(), g.sink());
        assert_eq!(g.project(&[0.5]).unwrap(), 1);
        assert_eq!(g.project(&[-1.5]).unwrap(), 0);
        assert_eq!(g.project(&[-1.5000001]).unwrap(), g.sink());
        assert!(matches!(
            g.project(&[0.0, 1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn projection_midpoints_go_to_smaller_index() {
        // exhaustive over the midpoints of an irregular sorted grid
        let pts = [-3.0, -1.0, 0.0, 0.5, 2.0, 2.25];
        let g = line(&pts);
        let h = g.axis_spacing()[0];
        assert_eq!(h, 0.25);
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                let mid = (pts[i] + pts[j]) / 2.0;
                let got = g.project(&[mid]).unwrap();
                // brute-force nearest with smallest-index ties
                let d: Vec<f64> = pts.iter().map(|p| (p - mid).abs()).collect();
                let best = d.iter().cloned().fold(f64::INFINITY, f64::min);
                let nearest = d.iter().position(|&v| v == best).unwrap();
                let want = if best <= h / 2.0 { nearest } else { g.sink() };
                assert_eq!(got, want, "midpoint {mid}");
            }
        }
    }

    #[test]
    fn projection_two_dimensional() {
        let g = StateSpace {
            dim: 2,
            points: vec![
                vec![0.0, 0.0],
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, 1.0],
            ],
        };
        assert_eq!(g.project(&[0.9, 0.2]).unwrap(), 1);
        assert_eq!(g.project(&[1.6, 0.2]).unwrap(), g.sink());
    }

    #[test]
    fn box_constraints() {
        let mut def = three_state_example_def(0.1, 0, 2).unwrap();
        def.constraints = ConstraintSets::Box {
            stationary: Some(BoxBounds {
                lower: vec![0.0],
                upper: vec![10.0],
            }),
            per_stage: None,
        };
        let m = Model::new(def).unwrap();
        let row: Vec<bool> = (0..=3).map(|x| m.in_constraint(2, x)).collect();
        assert_eq!(row, vec![false, true, true, false]);
    }

    #[test]
    fn json_round_trip_and_unknown_fields() {
        let def = three_state_example_def(0.01, 0, 40).unwrap();
        let text = def.to_json();
        assert_eq!(ModelDef::from_json(&text).unwrap(), def);

        let bad = text.replacen("\"probs\"", "\"bogus\": 1, \"probs\"", 1);
        let err = ModelDef::from_json(&bad).unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");

        let bad = text.replacen("\"T\": 40", "\"T\": \"forty\"", 1);
        let err = ModelDef::from_json(&bad).unwrap_err().to_string();
        assert!(err.contains("time.T"), "{err}");
    }
}
