//! Multi-dictionary SBL: coordinate ascent on the fused marginal likelihood.
//!
//! Every sensor `l` observes `y⁽ˡ⁾ = Σ_k ψ⁽ˡ⁾(θ_k)α_k⁽ˡ⁾ + v⁽ˡ⁾` through its
//! own dictionary. Components share a position `θ_k` and a prior precision
//! `γ_k` across sensors, so the active set is common to all of them while
//! the amplitudes are free per sensor.

mod objective;
mod solver;
mod stats;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::array::{Atom, Dictionary, Position, Region};
use crate::error::{Error, Result};
use crate::numerics::{cholesky_hermitian, NoiseWeight};

pub use objective::{direct_objective, em_noise_update, objective, posterior_amplitudes, PosteriorAmplitudes};
pub use solver::{propose_new_component, run, update_theta, Proposal};
pub use stats::{component_stats, partial_likelihood, update_gamma, ComponentStats, LeaveOneOut, SensorStats};

/// Noise covariance shape `Λ_v`; the scale `λ` is estimated separately.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseEnvelope {
    Identity,
    Dense {
        matrix: DMatrix<Complex64>,
        factor: DMatrix<Complex64>,
    },
}

impl NoiseEnvelope {
    pub fn dense(matrix: DMatrix<Complex64>) -> Result<Self> {
        let factor = cholesky_hermitian(&matrix, 0.0)?;
        Ok(Self::Dense { matrix, factor })
    }

    /// `λ·Λ_v`.
    pub fn weight(&self, lambda: f64, n: usize) -> NoiseWeight {
        match self {
            Self::Identity => NoiseWeight::scaled(lambda, n),
            Self::Dense { matrix, factor } => NoiseWeight::Dense {
                matrix: matrix * Complex64::from(lambda),
                factor: factor * Complex64::from(lambda.sqrt()),
            },
        }
    }

    /// `vᴴ·Λ_v·v`.
    pub fn quad_form(&self, v: &DVector<Complex64>) -> f64 {
        match self {
            Self::Identity => v.norm_squared(),
            Self::Dense { factor, .. } => factor.ad_mul(v).norm_squared(),
        }
    }
}

/// One sensor's snapshot together with its dictionary.
#[derive(Debug, Clone)]
pub struct SensorObservation {
    pub dictionary: Arc<dyn Dictionary>,
    pub snapshot: DVector<Complex64>,
    pub envelope: NoiseEnvelope,
}

impl SensorObservation {
    pub fn new(dictionary: Arc<dyn Dictionary>, snapshot: DVector<Complex64>) -> Result<Self> {
        Self::with_envelope(dictionary, snapshot, NoiseEnvelope::Identity)
    }

    pub fn with_envelope(
        dictionary: Arc<dyn Dictionary>,
        snapshot: DVector<Complex64>,
        envelope: NoiseEnvelope,
    ) -> Result<Self> {
        let n = dictionary.len();
        if snapshot.len() != n {
            return Err(Error::InvalidInput(format!(
                "snapshot has {} samples, dictionary expects {n}",
                snapshot.len()
            )));
        }
        if let NoiseEnvelope::Dense { matrix, .. } = &envelope {
            if matrix.nrows() != n {
                return Err(Error::InvalidInput(format!("noise envelope is {}x{}, expected {n}x{n}", matrix.nrows(), matrix.ncols())));
            }
        }
        Ok(Self {
            dictionary,
            snapshot,
            envelope,
        })
    }

    pub fn len(&self) -> usize {
        self.snapshot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshot.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct MultiSensorObservation {
    pub sensors: Vec<SensorObservation>,
}

impl MultiSensorObservation {
    pub fn new(sensors: Vec<SensorObservation>) -> Result<Self> {
        if sensors.is_empty() {
            return Err(Error::InvalidInput("need at least one sensor".into()));
        }
        Ok(Self { sensors })
    }

    pub fn sensor_count(&self) -> usize {
        self.sensors.len()
    }

    /// Atom of every sensor at `position`.
    pub fn atoms(&self, position: &Position) -> Result<Vec<Atom>> {
        self.sensors.iter().map(|s| s.dictionary.atom(position)).collect()
    }

    /// Keeps the first `count` sensors.
    pub fn truncated(&self, count: usize) -> Result<Self> {
        Self::new(self.sensors.iter().take(count).cloned().collect())
    }
}

/// One candidate object. Inactive components (γ = ∞) are not stored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentHypothesis {
    pub location: Position,
    pub gamma: f64,
}

impl ComponentHypothesis {
    pub fn is_active(&self) -> bool {
        self.gamma.is_finite() && self.gamma > 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    /// Minimum mean component SNR `χ` (linear, ≥ 1).
    pub threshold_chi: f64,
    /// Coarse candidate positions used to initialise new components.
    pub grid: Vec<Position>,
    /// Search bounds for continuous refinement.
    pub bounds: Region,
    pub max_outer_iters: usize,
    /// Largest position change (m) still counted as converged.
    pub convergence_tol: f64,
    /// Largest relative objective change still counted as converged.
    pub objective_tol: f64,
    pub k_max: usize,
    /// Proposals closer than this (m) to an active component are dropped.
    pub duplicate_radius: f64,
    pub optimizer_tol: f64,
    pub optimizer_max_evals: usize,
    pub optimizer_step: f64,
}

impl EngineConfig {
    pub fn new(threshold_chi: f64, grid: Vec<Position>, bounds: Region) -> Self {
        Self {
            threshold_chi,
            grid,
            bounds,
            max_outer_iters: 50,
            convergence_tol: 1e-3,
            objective_tol: 1e-6,
            k_max: 20,
            duplicate_radius: 1e-3,
            optimizer_tol: 1e-6,
            optimizer_max_evals: 500,
            optimizer_step: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.threshold_chi >= 1.0) {
            problems.push(format!("threshold_chi must be >= 1, got {}", self.threshold_chi));
        }
        if self.grid.is_empty() {
            problems.push("grid is empty".to_string());
        }
        if self.k_max == 0 {
            problems.push("k_max must be >= 1".to_string());
        }
        if !(self.optimizer_tol > 0.0) {
            problems.push("optimizer_tol must be positive".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInput(problems.join("; ")))
        }
    }
}

/// Solver state: active components, their atoms and the noise precisions.
#[derive(Debug, Clone)]
pub struct SblState {
    components: Vec<ComponentHypothesis>,
    /// `atoms[k][l]`: atom of component `k` at sensor `l`.
    atoms: Vec<Vec<Atom>>,
    pub noise_precisions: Vec<f64>,
}

impl SblState {
    pub fn empty(noise_precisions: Vec<f64>) -> Self {
        Self {
            components: Vec::new(),
            atoms: Vec::new(),
            noise_precisions,
        }
    }

    pub fn new(obs: &MultiSensorObservation, components: Vec<ComponentHypothesis>, noise_precisions: Vec<f64>) -> Result<Self> {
        if noise_precisions.len() != obs.sensor_count() {
            return Err(Error::InvalidInput("one noise precision per sensor required".into()));
        }
        let mut state = Self::empty(noise_precisions);
        for c in components {
            state.push(obs, c)?;
        }
        Ok(state)
    }

    pub fn components(&self) -> &[ComponentHypothesis] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn atoms(&self, k: usize) -> &[Atom] {
        &self.atoms[k]
    }

    pub fn push(&mut self, obs: &MultiSensorObservation, c: ComponentHypothesis) -> Result<()> {
        if !c.is_active() {
            return Err(Error::InvalidInput(format!("component gamma {} is not active", c.gamma)));
        }
        self.atoms.push(obs.atoms(&c.location)?);
        self.components.push(c);
        Ok(())
    }

    pub fn remove(&mut self, k: usize) -> ComponentHypothesis {
        self.atoms.remove(k);
        self.components.remove(k)
    }

    pub fn set_gamma(&mut self, k: usize, gamma: f64) {
        self.components[k].gamma = gamma;
    }

    pub fn set_location(&mut self, obs: &MultiSensorObservation, k: usize, location: Position) -> Result<()> {
        self.atoms[k] = obs.atoms(&location)?;
        self.components[k].location = location;
        Ok(())
    }

    pub fn weight(&self, obs: &MultiSensorObservation, l: usize) -> NoiseWeight {
        let s = &obs.sensors[l];
        s.envelope.weight(self.noise_precisions[l], s.len())
    }

    /// `Ψ⁽ˡ⁾` over the active components, skipping `exclude`.
    pub fn design(&self, l: usize, n: usize, exclude: Option<usize>) -> DMatrix<Complex64> {
        let cols: Vec<usize> = (0..self.len()).filter(|k| Some(*k) != exclude).collect();
        let mut phi = DMatrix::zeros(n, cols.len());
        for (j, k) in cols.iter().enumerate() {
            phi.set_column(j, self.atoms[*k][l].values());
        }
        phi
    }

    pub fn gammas(&self, exclude: Option<usize>) -> Vec<f64> {
        (0..self.len())
            .filter(|k| Some(*k) != exclude)
            .map(|k| self.components[k].gamma)
            .collect()
    }
}

/// Solver output.
#[derive(Debug, Clone)]
pub struct SblEstimate {
    pub components: Vec<ComponentHypothesis>,
    pub noise_precisions: Vec<f64>,
    /// Posterior amplitude means, one vector per sensor, indexed like `components`.
    pub amp_mean: Vec<DVector<Complex64>>,
    pub amp_precision: Vec<DMatrix<Complex64>>,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl SblEstimate {
    pub fn locations(&self) -> Vec<Position> {
        self.components.iter().map(|c| c.location).collect()
    }
}
