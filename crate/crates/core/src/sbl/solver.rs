use log::{debug, trace};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::objective::{em_noise_update, objective, posterior_amplitudes};
use super::stats::{is_degenerate, partial_likelihood, update_gamma, ComponentStats, LeaveOneOut};
use super::{ComponentHypothesis, EngineConfig, MultiSensorObservation, SblEstimate, SblState};
use crate::array::Position;
use crate::error::{Error, Result};
use crate::numerics::{maximize_2d, BoundedMaxProblem};

/// Candidate grid with its atoms precomputed for every sensor.
struct GridScan {
    points: Vec<Position>,
    /// `atoms[l]`: `N × M` matrix of grid atoms for sensor `l`.
    atoms: Vec<DMatrix<Complex64>>,
    /// `ψᴴΛ_vψ` per sensor and grid point.
    envelope_quad: Vec<Vec<f64>>,
}

impl GridScan {
    fn new(grid: &[Position], obs: &MultiSensorObservation) -> Self {
        // grid points on top of a sensor have no atom; drop them
        let mut points = Vec::with_capacity(grid.len());
        let mut columns: Vec<Vec<DVector<Complex64>>> = vec![Vec::new(); obs.sensor_count()];
        for p in grid {
            if let Ok(atoms) = obs.atoms(p) {
                points.push(*p);
                for (l, a) in atoms.into_iter().enumerate() {
                    columns[l].push(a.0);
                }
            }
        }
        let atoms: Vec<DMatrix<Complex64>> = columns
            .iter()
            .zip(&obs.sensors)
            .map(|(cols, s)| {
                if cols.is_empty() {
                    DMatrix::zeros(s.len(), 0)
                } else {
                    DMatrix::from_columns(cols)
                }
            })
            .collect();
        let envelope_quad = columns
            .iter()
            .zip(&obs.sensors)
            .map(|(cols, s)| cols.iter().map(|c| s.envelope.quad_form(c)).collect())
            .collect();
        Self {
            points,
            atoms,
            envelope_quad,
        }
    }

    /// Grid point with the largest mean component SNR.
    fn best(&self, loo: &LeaveOneOut, lambdas: &[f64]) -> Option<(Position, f64)> {
        let m = self.points.len();
        if m == 0 {
            return None;
        }
        let mut mean_snr = vec![0.0; m];
        let mut valid = vec![true; m];
        for (l, cache) in loo.caches().iter().enumerate() {
            let g = &self.atoms[l];
            let proj = g.ad_mul(&cache.resid);
            let explained = if cache.lowrank.ncols() > 0 {
                Some(cache.lowrank.ad_mul(g))
            } else {
                None
            };
            for j in 0..m {
                let q = lambdas[l] * self.envelope_quad[l][j];
                let e = explained.as_ref().map_or(0.0, |x| x.column(j).norm_squared());
                let denom = q - e;
                if !(denom > 1e-12 * q) {
                    valid[j] = false;
                    continue;
                }
                // Q = |μ|²/s = |ψᴴy_res|²·s
                mean_snr[j] += proj[j].norm_sqr() / denom;
            }
        }
        let n_sensors = loo.caches().len() as f64;
        let mut best: Option<(usize, f64)> = None;
        for j in 0..m {
            if !valid[j] {
                continue;
            }
            let v = mean_snr[j] / n_sensors;
            if best.map_or(true, |(_, bv)| v > bv) {
                best = Some((j, v));
            }
        }
        best.map(|(j, v)| (self.points[j], v))
    }
}

fn optimize(
    config: &EngineConfig,
    init: Position,
    mut f: impl FnMut(&Position) -> f64,
) -> Option<Position> {
    let init = config.bounds.clamp(&init);
    let problem = BoundedMaxProblem::new(&mut f, config.bounds, init)
        .with_tolerance(config.optimizer_tol)
        .with_max_evals(config.optimizer_max_evals)
        .with_initial_step(config.optimizer_step);
    match maximize_2d(problem) {
        Ok(r) => Some(r.argmax),
        Err(e) => {
            debug!("position refinement failed: {e}");
            None
        }
    }
}

fn stats_or_none(loo: &LeaveOneOut, obs: &MultiSensorObservation, p: &Position) -> Option<ComponentStats> {
    loo.stats(obs, p).ok()
}

/// Refines the position of active component `k` given its leave-one-out
/// caches: the component SNR for one sensor, the partial likelihood at the
/// current `γ̂_k` for several. Keeps the old position if refinement fails.
pub fn update_theta(
    k: usize,
    loo: &LeaveOneOut,
    state: &SblState,
    obs: &MultiSensorObservation,
    config: &EngineConfig,
) -> Position {
    let current = state.components()[k];
    let single = obs.sensor_count() == 1;
    let f = |p: &Position| match stats_or_none(loo, obs, p) {
        Some(st) if single => st.mean_snr,
        Some(st) => partial_likelihood(&st, current.gamma),
        None => f64::NEG_INFINITY,
    };
    if !f(&current.location).is_finite() {
        return current.location;
    }
    optimize(config, current.location, f).unwrap_or(current.location)
}

/// A refined candidate for a new component.
#[derive(Debug, Clone)]
pub struct Proposal {
    pub location: Position,
    pub grid_location: Position,
    pub stats: ComponentStats,
    /// Hyperparameter from the thresholded update; `∞` means rejected.
    pub gamma: f64,
}

fn propose(
    scan: &GridScan,
    loo: &LeaveOneOut,
    state: &SblState,
    obs: &MultiSensorObservation,
    config: &EngineConfig,
) -> Option<Proposal> {
    let (grid_location, _) = scan.best(loo, &state.noise_precisions)?;
    let f = |p: &Position| stats_or_none(loo, obs, p).map_or(f64::NEG_INFINITY, |st| st.mean_snr);
    let location = optimize(config, grid_location, f).unwrap_or(grid_location);
    let stats = stats_or_none(loo, obs, &location)?;
    let gamma = update_gamma(&stats, config.threshold_chi);
    Some(Proposal {
        location,
        grid_location,
        stats,
        gamma,
    })
}

/// Best new component given the current model: grid scan of the mean
/// component SNR followed by continuous refinement.
pub fn propose_new_component(
    state: &SblState,
    obs: &MultiSensorObservation,
    config: &EngineConfig,
) -> Result<Option<Proposal>> {
    let scan = GridScan::new(&config.grid, obs);
    let loo = LeaveOneOut::build(state, obs, None)?;
    Ok(propose(&scan, &loo, state, obs, config))
}

fn initial_noise_precisions(obs: &MultiSensorObservation) -> Vec<f64> {
    obs.sensors
        .iter()
        .map(|s| {
            let energy = s.envelope.quad_form(&s.snapshot);
            if energy > 0.0 {
                10.0 * s.len() as f64 / energy
            } else {
                1.0
            }
        })
        .collect()
}

/// Re-evaluates every component at its current position with the current
/// noise precisions and drops those that no longer pass the threshold.
fn prune(state: &mut SblState, obs: &MultiSensorObservation, chi: f64) -> Result<()> {
    let mut k = 0;
    while k < state.len() {
        let loo = LeaveOneOut::build(state, obs, Some(k))?;
        let gamma = match loo.stats(obs, &state.components()[k].location) {
            Ok(st) => update_gamma(&st, chi),
            Err(e) if is_degenerate(&e) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        if gamma.is_finite() {
            state.set_gamma(k, gamma);
            k += 1;
        } else {
            state.remove(k);
            // earlier components saw this one; start over
            k = 0;
        }
    }
    Ok(())
}

/// Runs the coordinate-ascent solver from an empty model.
pub fn run(obs: &MultiSensorObservation, config: &EngineConfig) -> Result<SblEstimate> {
    config.validate()?;
    let lambdas = initial_noise_precisions(obs);
    let all_zero = obs.sensors.iter().all(|s| s.snapshot.iter().all(|z| *z == Complex64::new(0.0, 0.0)));
    let mut state = SblState::empty(lambdas);
    if all_zero {
        return finish(state, obs, vec![], true, 0);
    }

    let scan = GridScan::new(&config.grid, obs);
    if scan.points.is_empty() {
        return Err(Error::InvalidInput("no grid point has a valid atom".into()));
    }
    let mut trace_values = vec![objective(&state, obs)?];
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..config.max_outer_iters {
        iterations = iter + 1;
        let start_objective = *trace_values.last().unwrap();
        let mut set_changed = false;
        let mut max_move: f64 = 0.0;

        let mut k = 0;
        while k < state.len() {
            let loo = LeaveOneOut::build(&state, obs, Some(k))?;
            let old = state.components()[k].location;
            let theta = update_theta(k, &loo, &state, obs, config);
            let gamma = match loo.stats(obs, &theta) {
                Ok(st) => update_gamma(&st, config.threshold_chi),
                Err(e) if is_degenerate(&e) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            if gamma.is_finite() {
                state.set_location(obs, k, theta)?;
                state.set_gamma(k, gamma);
                max_move = max_move.max((theta - old).norm());
                k += 1;
            } else {
                trace!("iteration {iterations}: component at ({:.3}, {:.3}) deactivated", old.x, old.y);
                state.remove(k);
                set_changed = true;
            }
            trace_values.push(objective(&state, obs)?);
        }

        if state.len() < config.k_max {
            let loo = LeaveOneOut::build(&state, obs, None)?;
            if let Some(p) = propose(&scan, &loo, &state, obs, config) {
                let duplicate = state
                    .components()
                    .iter()
                    .any(|c| (c.location - p.location).norm() < config.duplicate_radius);
                if p.gamma.is_finite() && !duplicate {
                    trace!(
                        "iteration {iterations}: new component at ({:.3}, {:.3}), mean SNR {:.2}",
                        p.location.x,
                        p.location.y,
                        p.stats.mean_snr
                    );
                    state.push(
                        obs,
                        ComponentHypothesis {
                            location: p.location,
                            gamma: p.gamma,
                        },
                    )?;
                    set_changed = true;
                    trace_values.push(objective(&state, obs)?);
                }
            }
        }

        state.noise_precisions = em_noise_update(&state, obs)?;
        let end_objective = objective(&state, obs)?;
        trace_values.push(end_objective);

        let rel_change = (end_objective - start_objective).abs() / end_objective.abs().max(1e-300);
        if !set_changed && max_move < config.convergence_tol && rel_change < config.objective_tol {
            converged = true;
            break;
        }
    }

    prune(&mut state, obs, config.threshold_chi)?;
    trace_values.push(objective(&state, obs)?);
    finish(state, obs, trace_values, converged, iterations)
}

fn finish(
    state: SblState,
    obs: &MultiSensorObservation,
    objective_trace: Vec<f64>,
    converged: bool,
    iterations: usize,
) -> Result<SblEstimate> {
    let post = posterior_amplitudes(&state, obs)?;
    let (amp_mean, amp_precision) = post.into_iter().map(|p| (p.mean, p.precision)).unzip();
    Ok(SblEstimate {
        components: state.components().to_vec(),
        noise_precisions: state.noise_precisions.clone(),
        amp_mean,
        amp_precision,
        objective_trace,
        converged,
        iterations,
    })
}
