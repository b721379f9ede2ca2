//! Matching pursuit with continuous refinement (NOMP-style baseline).
//!
//! Detection uses the whitened matched-filter statistic
//! `|ψᴴWr|² / ψᴴWψ` with the true noise precision `W = λΛ_v`; on an empty
//! model this is exactly the SBL component SNR, so `τ` and `χ` share a scale.
//! Newton steps are replaced by the same bounded simplex search SBL uses.

use log::debug;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::array::{Dictionary, Position, Region};
use crate::error::{Error, Result};
use crate::numerics::{maximize_2d, solve_hermitian, BoundedMaxProblem, NoiseWeight};

#[derive(Debug, Clone, PartialEq)]
pub struct NompConfig {
    /// Linear detection threshold.
    pub tau: f64,
    pub grid: Vec<Position>,
    pub bounds: Region,
    /// Cyclic refinement passes after every new detection.
    pub refine_rounds: usize,
    pub max_components: usize,
    pub optimizer_tol: f64,
    pub optimizer_max_evals: usize,
    pub optimizer_step: f64,
}

impl NompConfig {
    pub fn new(tau: f64, grid: Vec<Position>, bounds: Region) -> Self {
        Self {
            tau,
            grid,
            bounds,
            refine_rounds: 3,
            max_components: 20,
            optimizer_tol: 1e-6,
            optimizer_max_evals: 500,
            optimizer_step: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::InvalidInput(format!("tau must be positive, got {}", self.tau)));
        }
        if self.grid.is_empty() {
            return Err(Error::InvalidInput("grid is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NompEstimate {
    pub locations: Vec<Position>,
    pub amplitudes: Vec<Complex64>,
    /// `rᴴWr` of the final residual.
    pub residual_power: f64,
    /// `rᴴWr` after each accepted component (refit and refinement included).
    pub residual_history: Vec<f64>,
}

fn statistic(atom: &DVector<Complex64>, weight: &NoiseWeight, residual_w: &DVector<Complex64>) -> f64 {
    let q = weight.quad_form(atom);
    if !(q > 0.0) {
        return f64::NEG_INFINITY;
    }
    atom.dotc(residual_w).norm_sqr() / q
}

struct Model<'a> {
    dict: &'a dyn Dictionary,
    weight: &'a NoiseWeight,
    y: &'a DVector<Complex64>,
    locations: Vec<Position>,
    atoms: Vec<DVector<Complex64>>,
    amplitudes: Vec<Complex64>,
    residual: DVector<Complex64>,
}

impl Model<'_> {
    /// Weighted least-squares fit of all amplitudes at the current positions.
    fn refit(&mut self) -> Result<()> {
        if self.atoms.is_empty() {
            self.amplitudes.clear();
            self.residual = self.y.clone();
            return Ok(());
        }
        let phi = DMatrix::from_columns(&self.atoms);
        let w_phi = self.weight.apply_matrix(&phi);
        let gram = phi.ad_mul(&w_phi);
        let gram = (&gram + gram.adjoint()) * Complex64::from(0.5);
        let a = solve_hermitian(&gram, &w_phi.ad_mul(self.y))?;
        self.residual = self.y - &phi * &a;
        self.amplitudes = a.iter().copied().collect();
        Ok(())
    }

    fn residual_power(&self) -> f64 {
        self.weight.quad_form(&self.residual)
    }

    /// Maximizes the statistic against `residual` starting from `init`.
    fn refine(&self, config: &NompConfig, residual: &DVector<Complex64>, init: Position) -> Position {
        let rw = self.weight.apply(residual);
        let f = |p: &Position| match self.dict.atom(p) {
            Ok(a) => statistic(&a.0, self.weight, &rw),
            Err(_) => f64::NEG_INFINITY,
        };
        if !f(&init).is_finite() {
            return init;
        }
        let problem = BoundedMaxProblem::new(f, config.bounds, config.bounds.clamp(&init))
            .with_tolerance(config.optimizer_tol)
            .with_max_evals(config.optimizer_max_evals)
            .with_initial_step(config.optimizer_step);
        match maximize_2d(problem) {
            Ok(r) => r.argmax,
            Err(e) => {
                debug!("NOMP refinement failed: {e}");
                init
            }
        }
    }

    /// One cyclic pass: re-place each component against the residual
    /// without it, holding the others' amplitudes.
    fn cyclic_pass(&mut self, config: &NompConfig) -> Result<()> {
        for i in 0..self.atoms.len() {
            let without = &self.residual + &self.atoms[i] * self.amplitudes[i];
            let p = self.refine(config, &without, self.locations[i]);
            let atom = self.dict.atom(&p)?.0;
            let q = self.weight.quad_form(&atom);
            let amp = atom.dotc(&self.weight.apply(&without)) / q;
            self.residual = &without - &atom * amp;
            self.locations[i] = p;
            self.atoms[i] = atom;
            self.amplitudes[i] = amp;
        }
        Ok(())
    }
}

/// Runs the detector on one snapshot with known noise precision `weight`.
pub fn nomp_run(
    y: &DVector<Complex64>,
    dict: &dyn Dictionary,
    config: &NompConfig,
    weight: &NoiseWeight,
) -> Result<NompEstimate> {
    config.validate()?;
    if y.len() != dict.len() || weight.dim() != dict.len() {
        return Err(Error::InvalidInput("snapshot, dictionary and noise sizes differ".into()));
    }
    let grid: Vec<(Position, DVector<Complex64>, f64)> = config
        .grid
        .iter()
        .filter_map(|p| dict.atom(p).ok().map(|a| (*p, a.0)))
        .map(|(p, a)| {
            let q = weight.quad_form(&a);
            (p, a, q)
        })
        .collect();
    if grid.is_empty() {
        return Err(Error::InvalidInput("no grid point has a valid atom".into()));
    }

    let mut model = Model {
        dict,
        weight,
        y,
        locations: Vec::new(),
        atoms: Vec::new(),
        amplitudes: Vec::new(),
        residual: y.clone(),
    };
    let mut history = Vec::new();

    while model.atoms.len() < config.max_components {
        let rw = weight.apply(&model.residual);
        let (grid_best, _) = grid
            .iter()
            .map(|(p, a, q)| (*p, a.dotc(&rw).norm_sqr() / q))
            .fold((grid[0].0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        let p = model.refine(config, &model.residual, grid_best);
        let atom = dict.atom(&p)?.0;
        let stat = statistic(&atom, weight, &rw);
        if !(stat > config.tau) {
            break;
        }
        model.locations.push(p);
        model.atoms.push(atom);
        model.amplitudes.push(Complex64::new(0.0, 0.0));
        model.refit()?;
        for _ in 0..config.refine_rounds {
            model.cyclic_pass(config)?;
        }
        model.refit()?;
        history.push(model.residual_power());
    }

    Ok(NompEstimate {
        residual_power: model.residual_power(),
        locations: model.locations,
        amplitudes: model.amplitudes,
        residual_history: history,
    })
}
