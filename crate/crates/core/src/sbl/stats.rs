use log::debug;
use num_complex::Complex64;

use super::{MultiSensorObservation, SblState};
use crate::array::{Atom, Position};
use crate::error::{Error, Result};
use crate::numerics::{build_factor_cache, positive_real_roots, stats_from_cache, FactorCache, RealPolynomial};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorStats {
    pub s: f64,
    pub mu: Complex64,
    /// `|μ|²/s`
    pub snr: f64,
}

impl SensorStats {
    pub fn new(s: f64, mu: Complex64) -> Self {
        Self {
            s,
            mu,
            snr: mu.norm_sqr() / s,
        }
    }
}

/// Leave-one-out statistics of one component at one position, all sensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentStats {
    pub sensors: Vec<SensorStats>,
    pub mean_snr: f64,
}

impl ComponentStats {
    pub fn new(sensors: Vec<SensorStats>) -> Self {
        let mean_snr = sensors.iter().map(|s| s.snr).sum::<f64>() / sensors.len() as f64;
        Self { sensors, mean_snr }
    }
}

/// Factor caches of every sensor for the model without one component.
#[derive(Debug, Clone)]
pub struct LeaveOneOut {
    caches: Vec<FactorCache>,
    excluded: Option<usize>,
}

impl LeaveOneOut {
    /// `exclude = None` keeps all active components (used for proposals).
    pub fn build(state: &SblState, obs: &MultiSensorObservation, exclude: Option<usize>) -> Result<Self> {
        let gammas = state.gammas(exclude);
        let caches = obs
            .sensors
            .iter()
            .enumerate()
            .map(|(l, sensor)| {
                let atoms: Vec<&Atom> = (0..state.len())
                    .filter(|k| Some(*k) != exclude)
                    .map(|k| &state.atoms(k)[l])
                    .collect();
                build_factor_cache(&atoms, &gammas, &state.weight(obs, l), &sensor.snapshot)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { caches, excluded: exclude })
    }

    pub fn excluded(&self) -> Option<usize> {
        self.excluded
    }

    pub fn caches(&self) -> &[FactorCache] {
        &self.caches
    }

    /// Statistics for precomputed per-sensor atoms.
    pub fn stats_for_atoms(&self, atoms: &[Atom]) -> Result<ComponentStats> {
        let sensors = self
            .caches
            .iter()
            .zip(atoms)
            .map(|(cache, atom)| stats_from_cache(cache, atom).map(|(s, mu)| SensorStats::new(s, mu)))
            .collect::<Result<Vec<_>>>()?;
        Ok(ComponentStats::new(sensors))
    }

    pub fn stats(&self, obs: &MultiSensorObservation, position: &Position) -> Result<ComponentStats> {
        self.stats_for_atoms(&obs.atoms(position)?)
    }
}

/// Statistics of component `k` (or of a new component when `k` is `None`)
/// placed at `position`.
pub fn component_stats(
    position: &Position,
    k: Option<usize>,
    state: &SblState,
    obs: &MultiSensorObservation,
) -> Result<ComponentStats> {
    LeaveOneOut::build(state, obs, k)?.stats(obs, position)
}

/// Change of the objective when a component with these statistics is added
/// with precision `gamma`.
pub fn partial_likelihood(stats: &ComponentStats, gamma: f64) -> f64 {
    stats
        .sensors
        .iter()
        .map(|st| {
            let gs = gamma * st.s;
            st.snr / (1.0 + gs) + (gs / (1.0 + gs)).ln()
        })
        .sum()
}

/// Stationarity polynomial of the partial likelihood in `x = γ·s̄`, where
/// `s̄` is the mean leave-one-out variance. Rescaling keeps the coefficients
/// O(1) even when path loss makes `s` enormous.
fn stationarity_polynomial(stats: &ComponentStats, s_bar: f64) -> RealPolynomial {
    let mut total = RealPolynomial::constant(0.0);
    for (l, st) in stats.sensors.iter().enumerate() {
        let slope = (st.mu.norm_sqr() - st.s) / s_bar;
        let mut term = RealPolynomial::new(vec![1.0, -slope]);
        for (j, other) in stats.sensors.iter().enumerate() {
            if j != l {
                let f = RealPolynomial::new(vec![1.0, other.s / s_bar]);
                term = &term * &(&f * &f);
            }
        }
        total = &total + &term;
    }
    total
}

/// Hyperparameter update with thresholding: the stationary point that
/// increases the partial likelihood the most, or `∞` (deactivate) when the
/// mean component SNR does not exceed `chi` or no stationary point helps.
pub fn update_gamma(stats: &ComponentStats, chi: f64) -> f64 {
    if stats.sensors.is_empty() || !(stats.mean_snr > chi) {
        return f64::INFINITY;
    }
    let s_bar = stats.sensors.iter().map(|s| s.s).sum::<f64>() / stats.sensors.len() as f64;
    if !(s_bar > 0.0 && s_bar.is_finite()) {
        return f64::INFINITY;
    }
    if let [st] = stats.sensors.as_slice() {
        let excess = st.mu.norm_sqr() - st.s;
        return if excess > 0.0 { 1.0 / excess } else { f64::INFINITY };
    }
    let poly = stationarity_polynomial(stats, s_bar);
    let roots = match positive_real_roots(&poly, 1e-8, 1e-12) {
        Ok(r) => r,
        Err(e) => {
            debug!("gamma root finding failed ({e}); deactivating");
            return f64::INFINITY;
        }
    };
    // γ = ∞ contributes 0, so only roots with a positive gain compete.
    // Roots ascend and a later root must win by more than rounding, so
    // ties go to the smallest γ.
    let mut best: Option<(f64, f64)> = None;
    for x in roots {
        let gamma = x / s_bar;
        let value = partial_likelihood(stats, gamma);
        if !(value > 0.0) {
            continue;
        }
        match best {
            Some((_, v)) if value <= v + 1e-12 * v.max(1.0) => {}
            _ => best = Some((gamma, value)),
        }
    }
    best.map_or(f64::INFINITY, |(g, _)| g)
}

pub(super) fn is_degenerate(e: &Error) -> bool {
    matches!(e, Error::DegenerateStatistics(_))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats1(mu2: f64, s: f64) -> ComponentStats {
        ComponentStats::new(vec![SensorStats::new(s, Complex64::new(mu2.sqrt(), 0.0))])
    }

    #[test]
    fn closed_form_single_sensor() {
        let st = stats1(10.0, 1.0);
        assert!((update_gamma(&st, 1.0) - 1.0 / 9.0).abs() < 1e-15);
        assert!(update_gamma(&st, 10.5).is_infinite());
        assert!(update_gamma(&stats1(9.0, 1.0), 9.0).is_infinite());
        assert!(update_gamma(&stats1(0.5, 1.0), 1.0).is_infinite());
    }

    #[test]
    fn concentrated_partial_likelihood() {
        for q in [1.5, 3.0, 10.0, 1000.0] {
            let st = stats1(q * 2.0, 2.0);
            let g = update_gamma(&st, 1.0);
            let v = partial_likelihood(&st, g);
            assert!((v - (q - 1.0 - q.ln())).abs() < 1e-10 * q);
        }
    }

    #[test]
    fn infinite_gamma_limit_vanishes() {
        let st = ComponentStats::new(vec![
            SensorStats::new(0.7, Complex64::new(2.0, 1.0)),
            SensorStats::new(1.3, Complex64::new(-0.5, 3.0)),
        ]);
        let q: f64 = st.sensors.iter().map(|s| s.snr).sum();
        assert!(partial_likelihood(&st, 1e12).abs() < 1e-6 * q);
    }

    #[test]
    fn identical_sensors_reduce_to_mean_power() {
        let s = 0.8;
        let st = ComponentStats::new(vec![
            SensorStats::new(s, Complex64::new(3.0, 0.0)),
            SensorStats::new(s, Complex64::new(0.0, 2.0)),
        ]);
        let mean_mu2 = (9.0 + 4.0) / 2.0;
        let expected = 1.0 / (mean_mu2 - s);
        let g = update_gamma(&st, 1.0);
        assert!((g - expected).abs() < 1e-8 * expected, "{g} vs {expected}");
    }

    #[test]
    fn stationary_point_of_partial_likelihood() {
        let st = ComponentStats::new(vec![
            SensorStats::new(0.5, Complex64::new(4.0, 0.0)),
            SensorStats::new(2.0, Complex64::new(1.0, 2.0)),
            SensorStats::new(1.0, Complex64::new(0.0, 3.0)),
        ]);
        let g = update_gamma(&st, 1.0);
        assert!(g.is_finite());
        let h = 1e-6 * g;
        let d = (partial_likelihood(&st, g + h) - partial_likelihood(&st, g - h)) / (2.0 * h);
        assert!(d.abs() * g < 1e-5, "derivative {d}");
        // better than nearby values and than deactivation
        assert!(partial_likelihood(&st, g) > 0.0);
        assert!(partial_likelihood(&st, g) >= partial_likelihood(&st, 1.1 * g));
        assert!(partial_likelihood(&st, g) >= partial_likelihood(&st, 0.9 * g));
    }

    #[test]
    fn huge_variances_from_path_loss() {
        // s ~ 1e9, γ ~ 1e-12: the rescaled polynomial must still find the root
        let s = 2e9;
        let st = ComponentStats::new(vec![
            SensorStats::new(s, Complex64::new((50.0 * s * s).sqrt(), 0.0)),
            SensorStats::new(s, Complex64::new((30.0 * s * s).sqrt(), 0.0)),
        ]);
        let expected = 1.0 / (40.0 * s * s - s);
        let g = update_gamma(&st, 1.0);
        assert!((g - expected).abs() < 1e-8 * expected, "{g:e} vs {expected:e}");
    }
}
