use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{MultiSensorObservation, SblState};
use crate::error::{Error, Result};
use crate::numerics::{cholesky_hermitian, hermitian_logdet, solve_hermitian};

/// Posterior mean and precision of the amplitudes of one sensor.
#[derive(Debug, Clone)]
pub struct PosteriorAmplitudes {
    pub mean: DVector<Complex64>,
    pub precision: DMatrix<Complex64>,
}

fn hermitize(a: DMatrix<Complex64>) -> DMatrix<Complex64> {
    (&a + a.adjoint()) * Complex64::from(0.5)
}

/// `Λ_α = ΨᴴWΨ + Γ`, `α̂ = Λ_α⁻¹ΨᴴWy` for every sensor.
pub fn posterior_amplitudes(state: &SblState, obs: &MultiSensorObservation) -> Result<Vec<PosteriorAmplitudes>> {
    let gammas = state.gammas(None);
    obs.sensors
        .iter()
        .enumerate()
        .map(|(l, sensor)| {
            let n = sensor.len();
            let phi = state.design(l, n, None);
            let w = state.weight(obs, l);
            let w_phi = w.apply_matrix(&phi);
            let mut precision = phi.ad_mul(&w_phi);
            for (k, g) in gammas.iter().enumerate() {
                precision[(k, k)] += g;
            }
            let precision = hermitize(precision);
            let mean = if gammas.is_empty() {
                DVector::zeros(0)
            } else {
                solve_hermitian(&precision, &w_phi.ad_mul(&sensor.snapshot))?
            };
            Ok(PosteriorAmplitudes { mean, precision })
        })
        .collect()
}

/// Marginal log-likelihood `Σ_l −yᴴC⁻¹y − log|C|` (constants dropped),
/// evaluated through the `K×K` amplitude precision:
///
/// ```text
/// yᴴC⁻¹y = yᴴWy − bᴴΛ_α⁻¹b,   log|C| = −log|W| + log|Λ_α| − Σ log γ_k,   b = ΨᴴWy
/// ```
pub fn objective(state: &SblState, obs: &MultiSensorObservation) -> Result<f64> {
    let gammas = state.gammas(None);
    let log_gamma: f64 = gammas.iter().map(|g| g.ln()).sum();
    let mut total = 0.0;
    for (l, sensor) in obs.sensors.iter().enumerate() {
        let n = sensor.len();
        let y = &sensor.snapshot;
        let w = state.weight(obs, l);
        let log_w = match &sensor.envelope {
            super::NoiseEnvelope::Identity => n as f64 * state.noise_precisions[l].ln(),
            super::NoiseEnvelope::Dense { factor, .. } => {
                n as f64 * state.noise_precisions[l].ln()
                    + 2.0 * (0..n).map(|i| factor[(i, i)].re.ln()).sum::<f64>()
            }
        };
        let mut value = -w.quad_form(y) + log_w;
        if !gammas.is_empty() {
            let phi = state.design(l, n, None);
            let w_phi = w.apply_matrix(&phi);
            let mut precision = phi.ad_mul(&w_phi);
            for (k, g) in gammas.iter().enumerate() {
                precision[(k, k)] += g;
            }
            let d = cholesky_hermitian(&hermitize(precision), 0.0)?;
            let b = w_phi.ad_mul(y);
            let z = d
                .solve_lower_triangular(&b)
                .ok_or_else(|| Error::Numerical("singular amplitude precision".into()))?;
            let log_prec = 2.0 * (0..d.nrows()).map(|i| d[(i, i)].re.ln()).sum::<f64>();
            value += z.norm_squared() - log_prec + log_gamma;
        }
        total += value;
    }
    Ok(total)
}

/// The same objective from the dense `N×N` covariance
/// `C = ΨΓ⁻¹Ψᴴ + (λΛ_v)⁻¹`. Slow; kept as a reference.
pub fn direct_objective(state: &SblState, obs: &MultiSensorObservation) -> Result<f64> {
    let gammas = state.gammas(None);
    let mut total = 0.0;
    for (l, sensor) in obs.sensors.iter().enumerate() {
        let n = sensor.len();
        let y = &sensor.snapshot;
        let w = state.weight(obs, l).to_dense();
        let mut c = w
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("noise precision is singular".into()))?;
        let phi = state.design(l, n, None);
        for (k, g) in gammas.iter().enumerate() {
            let col = phi.column(k);
            c += col * col.adjoint() * Complex64::from(1.0 / g);
        }
        let c = hermitize(c);
        let x = solve_hermitian(&c, y)?;
        total += -y.dotc(&x).re - hermitian_logdet(&c)?;
    }
    Ok(total)
}

/// One EM step for the noise precisions:
/// `λ_new = N / (rᴴΛ_v r + tr(Λ_α⁻¹ΨᴴΛ_vΨ))`, `r = y − Ψα̂`.
pub fn em_noise_update(state: &SblState, obs: &MultiSensorObservation) -> Result<Vec<f64>> {
    let post = posterior_amplitudes(state, obs)?;
    obs.sensors
        .iter()
        .zip(post)
        .enumerate()
        .map(|(l, (sensor, p))| {
            let n = sensor.len();
            let phi = state.design(l, n, None);
            let resid = &sensor.snapshot - &phi * &p.mean;
            let mut denom = sensor.envelope.quad_form(&resid);
            if phi.ncols() > 0 {
                let lam = state.noise_precisions[l];
                // ΨᴴΛ_vΨ = (ΨᴴWΨ)/λ; its product with Λ_α⁻¹ via a solve
                let w_phi = state.weight(obs, l).apply_matrix(&phi);
                let gram = phi.ad_mul(&w_phi) * Complex64::from(1.0 / lam);
                let d = cholesky_hermitian(&p.precision, 0.0)?;
                let chol = nalgebra::Cholesky::<Complex64, nalgebra::Dyn>::pack_dirty(d);
                let x = chol.solve(&gram);
                denom += (0..x.nrows()).map(|i| x[(i, i)].re).sum::<f64>();
            }
            if !(denom > 0.0 && denom.is_finite()) {
                return Err(Error::Numerical(format!("EM noise update denominator {denom:e}")));
            }
            Ok(n as f64 / denom)
        })
        .collect()
}
