//! Closed-form value function and kernel for the three-state example
//! (see [`crate::model::three_state_example`]).
//!
//! The value is `V(t, x) = (M^(T-t) · 1)_(x+2)` for `x in {-1, 0, 1}` (1-based
//! component `x + 2`, so `-1 -> 1`, `0 -> 2`, `1 -> 3`) and 0 elsewhere. Powers
//! are taken by repeated multiplication.
//!
//! Two matrices are provided. [`ExampleMatrix::new`] is the reference closed
//! form with middle row `(p, 1-2p, 0)`. [`ExampleMatrix::from_dynamics`] is the
//! one-step transition matrix of `x + u + w` under the argmax feedback, whose
//! middle row is `(1-2p, p, 0)`: from `x = 0` with `u = -1`, `w = 0` leads to
//! `-1` and `w = +1` back to `0`. Backward induction on the model agrees with
//! the latter; the two differ for horizons of two steps or more.

use crate::error::{Error, Result};

/// Component `x + 2` (1-based) of a vector indexed by `x in {-1, 0, 1}`.
pub fn component_of(x: i64) -> Option<usize> {
    (-1..=1).contains(&x).then(|| (x + 1) as usize)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExampleMatrix {
    pub p: f64,
    pub m: [[f64; 3]; 3],
}

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p < 0.5 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "p = {p} must lie in (0, 1/2)"
        )))
    }
}

impl ExampleMatrix {
    /// Reference closed form `[[p, 1-2p, p], [p, 1-2p, 0], [p, 1-2p, p]]`.
    pub fn new(p: f64) -> Result<Self> {
        check_p(p)?;
        let q = 1.0 - 2.0 * p;
        Ok(Self {
            p,
            m: [[p, q, p], [p, q, 0.0], [p, q, p]],
        })
    }

    /// Transition matrix of the model itself,
    /// `[[p, 1-2p, p], [1-2p, p, 0], [p, 1-2p, p]]`.
    pub fn from_dynamics(p: f64) -> Result<Self> {
        check_p(p)?;
        let q = 1.0 - 2.0 * p;
        Ok(Self {
            p,
            m: [[p, q, p], [q, p, 0.0], [p, q, p]],
        })
    }

    pub fn row_sums(&self) -> [f64; 3] {
        self.m.map(|row| row.iter().sum())
    }

    /// `M^steps · 1`.
    pub fn powered_ones(&self, steps: usize) -> [f64; 3] {
        let mut power = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        for _ in 0..steps {
            let mut next = [[0.0; 3]; 3];
            for (i, row) in next.iter_mut().enumerate() {
                for (j, cell) in row.iter_mut().enumerate() {
                    *cell = (0..3).map(|k| power[i][k] * self.m[k][j]).sum();
                }
            }
            power = next;
        }
        power.map(|row| row.iter().sum())
    }

    pub fn value(&self, steps: usize, x: i64) -> f64 {
        component_of(x).map_or(0.0, |c| self.powered_ones(steps)[c])
    }

    pub fn kernel(&self, steps: usize, beta: f64) -> Result<ClosedFormKernel> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::BetaOutOfRange(beta));
        }
        let v = self.powered_ones(steps);
        Ok(if beta <= v[1] {
            ClosedFormKernel::Full
        } else if beta <= v[0] {
            ClosedFormKernel::BoundaryPair
        } else {
            ClosedFormKernel::Empty
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClosedFormKernel {
    /// `{-1, 0, 1}`
    Full,
    /// `{-1, 1}`
    BoundaryPair,
    Empty,
}

impl ClosedFormKernel {
    pub fn members(self) -> &'static [i64] {
        match self {
            ClosedFormKernel::Full => &[-1, 0, 1],
            ClosedFormKernel::BoundaryPair => &[-1, 1],
            ClosedFormKernel::Empty => &[],
        }
    }
}

fn steps_to_go(horizon: i64, t: i64) -> Result<usize> {
    if t > horizon {
        return Err(Error::InvalidParameter(format!(
            "t = {t} is past the horizon T = {horizon}"
        )));
    }
    Ok((horizon - t) as usize)
}

/// Reference closed-form value `(M^(T-t) · 1)_(x+2)`, 0 off the grid.
pub fn matrix_value(p: f64, horizon: i64, t: i64, x: i64) -> Result<f64> {
    Ok(ExampleMatrix::new(p)?.value(steps_to_go(horizon, t)?, x))
}

/// Reference closed-form kernel at confidence `beta`.
pub fn kernel_closed_form(p: f64, horizon: i64, t: i64, beta: f64) -> Result<ClosedFormKernel> {
    ExampleMatrix::new(p)?.kernel(steps_to_go(horizon, t)?, beta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_sums() {
        for p in [0.01, 0.1, 0.3] {
            for m in [
                ExampleMatrix::new(p).unwrap(),
                ExampleMatrix::from_dynamics(p).unwrap(),
            ] {
                let s = m.row_sums();
                assert!((s[0] - 1.0).abs() < 1e-15);
                assert!((s[1] - (1.0 - p)).abs() < 1e-15);
                assert!((s[2] - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_power_is_identity() {
        for x in -1..=1 {
            assert_eq!(matrix_value(0.2, 10, 10, x).unwrap(), 1.0);
        }
        assert_eq!(matrix_value(0.2, 10, 10, 2).unwrap(), 0.0);
        assert_eq!(
            kernel_closed_form(0.2, 10, 10, 1.0).unwrap(),
            ClosedFormKernel::Full
        );
    }

    #[test]
    fn one_step() {
        let v: Vec<f64> = (-1..=1)
            .map(|x| matrix_value(0.01, 40, 39, x).unwrap())
            .collect();
        assert_eq!(v[0], 1.0);
        assert!((v[1] - 0.99).abs() < 1e-15);
        assert_eq!(v[2], 1.0);
        let v1 = ExampleMatrix::new(0.01).unwrap().powered_ones(1)[1];
        assert_eq!(
            kernel_closed_form(0.01, 40, 39, v1).unwrap(),
            ClosedFormKernel::Full
        );
        assert_eq!(
            kernel_closed_form(0.01, 40, 39, 0.995).unwrap(),
            ClosedFormKernel::BoundaryPair
        );
    }

    #[test]
    fn forty_steps() {
        let v = matrix_value(0.01, 40, 0, 0).unwrap();
        assert!((0.66..=0.68).contains(&v), "{v}");
        let d = ExampleMatrix::from_dynamics(0.01).unwrap().value(40, 0);
        assert!((0.81..=0.83).contains(&d), "{d}");
    }

    #[test]
    fn symmetry_and_monotonicity() {
        for p in [0.01, 0.1, 0.3, 0.49] {
            for m in [
                ExampleMatrix::new(p).unwrap(),
                ExampleMatrix::from_dynamics(p).unwrap(),
            ] {
                let mut prev = [1.0; 3];
                for k in 0..60 {
                    let v = m.powered_ones(k);
                    assert_eq!(v[0], v[2]);
                    for c in 0..3 {
                        assert!(v[c] <= prev[c]);
                    }
                    prev = v;
                }
            }
        }
    }

    #[test]
    fn parameter_errors() {
        assert!(matrix_value(0.5, 10, 0, 0).is_err());
        assert!(matrix_value(0.0, 10, 0, 0).is_err());
        assert!(matrix_value(0.1, 10, 11, 0).is_err());
        assert!(matches!(
            kernel_closed_form(0.1, 10, 0, 0.0),
            Err(Error::BetaOutOfRange(_))
        ));
    }
}
