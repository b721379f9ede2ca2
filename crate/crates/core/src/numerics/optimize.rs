//! Bounded Nelder-Mead maximization in two dimensions.
//!
//! Vertices are projected onto the bounding rectangle, so every evaluated
//! point is feasible. The starting point is one of the initial vertices and
//! the best vertex is only ever replaced by a strictly better one, which
//! makes the returned value at least the value at the starting point.

use crate::array::{Position, Region};
use crate::error::{Error, Result};

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

/// A bounded 2-D maximization problem.
pub struct BoundedMaxProblem<F> {
    pub objective: F,
    pub bounds: Region,
    pub init: Position,
    /// Stop once every vertex is within this distance of the best one.
    pub tolerance: f64,
    pub max_evals: usize,
    /// Edge length of the initial simplex.
    pub initial_step: f64,
}

impl<F: FnMut(&Position) -> f64> BoundedMaxProblem<F> {
    pub fn new(objective: F, bounds: Region, init: Position) -> Self {
        Self {
            objective,
            bounds,
            init,
            tolerance: 1e-6,
            max_evals: 500,
            initial_step: 1.0,
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_max_evals(mut self, max_evals: usize) -> Self {
        self.max_evals = max_evals;
        self
    }

    pub fn with_initial_step(mut self, step: f64) -> Self {
        self.initial_step = step;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxResult {
    pub argmax: Position,
    pub value: f64,
    pub evals: usize,
    /// False when the evaluation budget ran out before the simplex collapsed.
    pub converged: bool,
}

pub fn maximize_2d<F: FnMut(&Position) -> f64>(problem: BoundedMaxProblem<F>) -> Result<MaxResult> {
    let BoundedMaxProblem {
        mut objective,
        bounds,
        init,
        tolerance,
        max_evals,
        initial_step,
    } = problem;

    if !(tolerance > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tolerance}")));
    }
    if !bounds.contains(&init) {
        return Err(Error::InvalidInput(format!(
            "initial point ({}, {}) outside bounds",
            init.x, init.y
        )));
    }

    let mut evals = 0usize;
    // Internally minimize the negated objective; non-finite values rank last.
    let mut cost = |p: &Position, evals: &mut usize| -> f64 {
        *evals += 1;
        let v = objective(p);
        if v.is_finite() {
            -v
        } else {
            f64::INFINITY
        }
    };

    let f0 = cost(&init, &mut evals);
    if !f0.is_finite() {
        return Err(Error::InvalidInput("objective is not finite at the initial point".into()));
    }

    let mut simplex: [(Position, f64); 3] = [(init, f0); 3];
    for axis in 0..2 {
        let mut step = Position::zeros();
        step[axis] = initial_step;
        let mut v = bounds.clamp(&(init + step));
        if (v - init).norm() < 0.5 * initial_step {
            v = bounds.clamp(&(init - step));
        }
        simplex[axis + 1] = (v, cost(&v, &mut evals));
    }

    let mut converged = false;
    while evals < max_evals {
        // stable sort keeps the incumbent best in front on ties
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0];
        let spread = simplex[1..]
            .iter()
            .map(|(p, _)| (p - best.0).norm())
            .fold(0.0, f64::max);
        if spread <= tolerance {
            converged = true;
            break;
        }

        let centroid = (simplex[0].0 + simplex[1].0) * 0.5;
        let worst = simplex[2];
        let reflected = bounds.clamp(&(centroid + (centroid - worst.0) * REFLECT));
        let fr = cost(&reflected, &mut evals);

        if fr < best.1 {
            let expanded = bounds.clamp(&(centroid + (centroid - worst.0) * EXPAND));
            let fe = cost(&expanded, &mut evals);
            simplex[2] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
            continue;
        }
        if fr < simplex[1].1 {
            simplex[2] = (reflected, fr);
            continue;
        }

        let (contracted, fc) = if fr < worst.1 {
            let c = bounds.clamp(&(centroid + (reflected - centroid) * CONTRACT));
            (c, cost(&c, &mut evals))
        } else {
            let c = bounds.clamp(&(centroid + (worst.0 - centroid) * CONTRACT));
            (c, cost(&c, &mut evals))
        };
        if fc < worst.1.min(fr) {
            simplex[2] = (contracted, fc);
            continue;
        }

        for vertex in simplex.iter_mut().skip(1) {
            let p = best.0 + (vertex.0 - best.0) * SHRINK;
            *vertex = (p, cost(&p, &mut evals));
        }
    }

    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (argmax, c) = simplex[0];
    Ok(MaxResult {
        argmax,
        value: -c,
        evals,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(h: f64) -> Region {
        Region::new([-h, h], [-h, h]).unwrap()
    }

    #[test]
    fn concave_quadratic() {
        let target = Position::new(1.0, 2.0);
        let res = maximize_2d(BoundedMaxProblem::new(
            |p: &Position| -(p - target).norm_squared(),
            square(10.0),
            Position::zeros(),
        ))
        .unwrap();
        assert!(res.converged);
        assert!((res.argmax - target).norm() < 1e-4, "{:?}", res.argmax);
    }

    #[test]
    fn constant_objective_returns_init() {
        let init = Position::new(0.3, -0.7);
        let res = maximize_2d(BoundedMaxProblem::new(|_: &Position| 5.0, square(10.0), init)).unwrap();
        assert_eq!(res.value, 5.0);
        assert_eq!(res.argmax, init);
    }

    #[test]
    fn maximum_outside_bounds_lands_on_boundary() {
        let target = Position::new(20.0, 0.5);
        let res = maximize_2d(BoundedMaxProblem::new(
            |p: &Position| -(p - target).norm_squared(),
            square(10.0),
            Position::new(9.9, 9.9),
        ))
        .unwrap();
        assert!((res.argmax - Position::new(10.0, 0.5)).norm() < 1e-4);
    }

    #[test]
    fn non_finite_init_is_rejected() {
        let res = maximize_2d(BoundedMaxProblem::new(
            |_: &Position| f64::NAN,
            square(1.0),
            Position::zeros(),
        ));
        assert!(matches!(res, Err(Error::InvalidInput(_))));
        let res = maximize_2d(BoundedMaxProblem::new(
            |_: &Position| 1.0,
            square(1.0),
            Position::new(3.0, 0.0),
        ));
        assert!(res.is_err());
    }

    #[test]
    fn non_finite_regions_are_avoided() {
        let res = maximize_2d(BoundedMaxProblem::new(
            |p: &Position| {
                if p.x > 0.5 {
                    f64::NEG_INFINITY
                } else {
                    -(p - Position::new(0.4, 0.0)).norm_squared()
                }
            },
            square(5.0),
            Position::new(-2.0, 1.0),
        ))
        .unwrap();
        assert!((res.argmax - Position::new(0.4, 0.0)).norm() < 1e-4);
    }

    #[test]
    fn never_worse_than_init() {
        // rugged objective: many local maxima
        let f = |p: &Position| (3.0 * p.x).sin() * (2.0 * p.y).cos() - 0.01 * p.norm_squared();
        for i in 0..40 {
            let init = Position::new(-4.0 + 0.2 * i as f64, 3.0 - 0.15 * i as f64);
            let res = maximize_2d(BoundedMaxProblem::new(f, square(5.0), init)).unwrap();
            assert!(res.value >= f(&init));
            assert!(square(5.0).contains(&res.argmax));
            assert!(res.evals <= 500 + 3);
        }
    }
}
