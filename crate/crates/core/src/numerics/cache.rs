//! Low-rank factorization of the leave-one-out weighting matrix.
//!
//! With `W = λ̂Λ_v`, active atoms `Φ` and hyperparameters `Γ`, the weighted
//! residual projector satisfies
//!
//! ```text
//! W·M = W − WΦ(ΦᴴWΦ + Γ)⁻¹ΦᴴW = L·Lᴴ − R·Rᴴ,   R = WΦ·D⁻ᴴ,  D·Dᴴ = ΦᴴWΦ + Γ
//! ```
//!
//! so for any probe atom `ψ` the statistics `s = 1/(ψᴴWMψ)` and
//! `μ = s·ψᴴWMy` cost `O(N·K)` once `R` and `y_res = Wy − RRᴴy` are known.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::chol::cholesky_hermitian;
use crate::array::Atom;
use crate::error::{Error, Result};

/// Noise precision matrix `W = λ̂·Λ_v`.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseWeight {
    /// `W = λ̂·I`.
    Scaled { lambda: f64, n: usize },
    /// General Hermitian positive-definite `W` with its lower factor.
    Dense {
        matrix: DMatrix<Complex64>,
        factor: DMatrix<Complex64>,
    },
}

impl NoiseWeight {
    pub fn scaled(lambda: f64, n: usize) -> Self {
        Self::Scaled { lambda, n }
    }

    pub fn dense(matrix: DMatrix<Complex64>) -> Result<Self> {
        let factor = cholesky_hermitian(&matrix, 0.0)?;
        Ok(Self::Dense { matrix, factor })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Scaled { n, .. } => *n,
            Self::Dense { matrix, .. } => matrix.nrows(),
        }
    }

    /// `W·v`.
    pub fn apply(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        match self {
            Self::Scaled { lambda, .. } => v * Complex64::from(*lambda),
            Self::Dense { matrix, .. } => matrix * v,
        }
    }

    /// `W·V` column by column.
    pub fn apply_matrix(&self, v: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        match self {
            Self::Scaled { lambda, .. } => v * Complex64::from(*lambda),
            Self::Dense { matrix, .. } => matrix * v,
        }
    }

    /// `vᴴ·W·v`, i.e. `‖Lᴴv‖²`.
    pub fn quad_form(&self, v: &DVector<Complex64>) -> f64 {
        match self {
            Self::Scaled { lambda, .. } => lambda * v.norm_squared(),
            Self::Dense { factor, .. } => factor.ad_mul(v).norm_squared(),
        }
    }

    /// Lower-triangular `L` with `L·Lᴴ = W`.
    pub fn factor(&self) -> DMatrix<Complex64> {
        match self {
            Self::Scaled { lambda, n } => DMatrix::identity(*n, *n) * Complex64::from(lambda.sqrt()),
            Self::Dense { factor, .. } => factor.clone(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        match self {
            Self::Scaled { lambda, n } => DMatrix::identity(*n, *n) * Complex64::from(*lambda),
            Self::Dense { matrix, .. } => matrix.clone(),
        }
    }
}

/// Precomputed factors for one sensor and one leave-one-out active set.
#[derive(Debug, Clone)]
pub struct FactorCache {
    pub chol_noise: NoiseWeight,
    /// `D` with `D·Dᴴ = ΦᴴWΦ + Γ`; `0×0` for an empty active set.
    pub chol_amp: DMatrix<Complex64>,
    /// `R = WΦ·D⁻ᴴ`, `N×K`.
    pub lowrank: DMatrix<Complex64>,
    /// `y_res = W·y − R·Rᴴ·y`.
    pub resid: DVector<Complex64>,
}

impl FactorCache {
    /// Dense `W·M` reconstructed from the factors.
    pub fn weighted_projector(&self) -> DMatrix<Complex64> {
        self.chol_noise.to_dense() - &self.lowrank * self.lowrank.adjoint()
    }
}

/// Builds the cache for the active atoms `atoms` with precisions `gammas`.
pub fn build_factor_cache(
    atoms: &[&Atom],
    gammas: &[f64],
    weight: &NoiseWeight,
    y: &DVector<Complex64>,
) -> Result<FactorCache> {
    let n = weight.dim();
    if y.len() != n {
        return Err(Error::InvalidInput(format!("snapshot length {} != {}", y.len(), n)));
    }
    if atoms.len() != gammas.len() {
        return Err(Error::InvalidInput("one hyperparameter per active atom required".into()));
    }
    if let Some(g) = gammas.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
        return Err(Error::InvalidInput(format!("active hyperparameters must be finite and positive, got {g}")));
    }
    let k = atoms.len();
    let wy = weight.apply(y);
    if k == 0 {
        return Ok(FactorCache {
            chol_noise: weight.clone(),
            chol_amp: DMatrix::zeros(0, 0),
            lowrank: DMatrix::zeros(n, 0),
            resid: wy,
        });
    }

    let mut phi = DMatrix::<Complex64>::zeros(n, k);
    for (j, a) in atoms.iter().enumerate() {
        if a.len() != n {
            return Err(Error::InvalidInput(format!("atom length {} != {}", a.len(), n)));
        }
        phi.set_column(j, a.values());
    }
    let w_phi = weight.apply_matrix(&phi);
    let mut precision = phi.ad_mul(&w_phi);
    for (j, g) in gammas.iter().enumerate() {
        precision[(j, j)] += g;
    }
    // enforce exact Hermitian symmetry before factorizing
    let precision = (&precision + precision.adjoint()) * Complex64::from(0.5);
    let d = cholesky_hermitian(&precision, 0.0)?;
    // Rᴴ = D⁻¹·(WΦ)ᴴ
    let r_adj = d
        .solve_lower_triangular(&w_phi.adjoint())
        .ok_or_else(|| Error::Numerical("singular amplitude factor".into()))?;
    let lowrank = r_adj.adjoint();
    let resid = wy - &lowrank * (&r_adj * y);
    Ok(FactorCache {
        chol_noise: weight.clone(),
        chol_amp: d,
        lowrank,
        resid,
    })
}

/// Leave-one-out variance `s` and mean `μ` of a probe atom's amplitude.
pub fn stats_from_cache(cache: &FactorCache, atom: &Atom) -> Result<(f64, Complex64)> {
    let psi = atom.values();
    let q = cache.chol_noise.quad_form(psi);
    let explained = if cache.lowrank.ncols() == 0 {
        0.0
    } else {
        cache.lowrank.ad_mul(psi).norm_squared()
    };
    let denom = q - explained;
    if !(denom > 1e-12 * q) {
        return Err(Error::DegenerateStatistics(denom));
    }
    let s = 1.0 / denom;
    let mu = psi.dotc(&cache.resid) * s;
    Ok((s, mu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{Dictionary, Position, RadarGeometry, RadarSettings};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn radar() -> RadarGeometry {
        RadarGeometry::mimo_3x3([0.0, 0.0], std::f64::consts::FRAC_PI_2, &RadarSettings::default())
            .unwrap()
    }

    /// Dense `W·M` straight from the definition.
    fn dense_weighted_projector(atoms: &[&Atom], gammas: &[f64], w: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let n = w.nrows();
        if atoms.is_empty() {
            return w.clone();
        }
        let phi = DMatrix::from_columns(&atoms.iter().map(|a| a.values().clone()).collect::<Vec<_>>());
        let mut prec = phi.adjoint() * w * &phi;
        for (j, g) in gammas.iter().enumerate() {
            prec[(j, j)] += g;
        }
        let inv = prec.try_inverse().unwrap();
        let m = DMatrix::identity(n, n) - &phi * inv * phi.adjoint() * w;
        w * m
    }

    #[test]
    fn empty_active_set() {
        let g = radar();
        let y = g.atom(&Position::new(1.0, 20.0)).unwrap().0 * c(3.0);
        let w = NoiseWeight::scaled(2.0, 135);
        let cache = build_factor_cache(&[], &[], &w, &y).unwrap();
        assert_eq!(cache.lowrank.ncols(), 0);
        assert!((&cache.resid - &y * c(2.0)).norm() < 1e-14);

        let w1 = NoiseWeight::scaled(1.0, 135);
        let cache = build_factor_cache(&[], &[], &w1, &y).unwrap();
        let probe = g.atom(&Position::new(-3.0, 31.0)).unwrap();
        let (s, mu) = stats_from_cache(&cache, &probe).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        assert!((mu - probe.values().dotc(&y)).norm() < 1e-12);
    }

    #[test]
    fn single_orthonormal_atom() {
        // Λ_α = ψᴴψ + γ = 2, so R Rᴴ = ψψᴴ/2
        let g = radar();
        let a = g.atom(&Position::new(0.0, 30.0)).unwrap();
        let y = DVector::from_element(135, c(0.1));
        let cache = build_factor_cache(&[&a], &[1.0], &NoiseWeight::scaled(1.0, 135), &y).unwrap();
        let rr = &cache.lowrank * cache.lowrank.adjoint();
        let expected = a.values() * a.values().adjoint() * c(0.5);
        assert!((rr - expected).norm() < 1e-12);
    }

    fn hermitian_pd(n: usize, next: &mut impl FnMut() -> f64) -> DMatrix<Complex64> {
        let b = DMatrix::from_fn(n, n, |_, _| Complex64::new(next(), next()) * 0.1);
        b.adjoint() * &b + DMatrix::identity(n, n)
    }

    #[test]
    fn factors_reproduce_dense_projector_and_stats() {
        let g = radar();
        let mut seed = 7u64;
        let mut next = move || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        for k in 0..=5 {
            for dense in [false, true] {
                let atoms: Vec<Atom> = (0..k)
                    .map(|_| g.atom(&Position::new(40.0 * next(), 30.0 + 40.0 * next())).unwrap())
                    .collect();
                let refs: Vec<&Atom> = atoms.iter().collect();
                let gammas: Vec<f64> = (0..k).map(|_| 0.01 + next().abs()).collect();
                let weight = if dense {
                    NoiseWeight::dense(hermitian_pd(135, &mut next) * c(0.7)).unwrap()
                } else {
                    NoiseWeight::scaled(0.7, 135)
                };
                let y = DVector::from_fn(135, |_, _| Complex64::new(next(), next()));
                let cache = build_factor_cache(&refs, &gammas, &weight, &y).unwrap();
                let wm = dense_weighted_projector(&refs, &gammas, &weight.to_dense());
                let rel = (cache.weighted_projector() - &wm).norm() / wm.norm();
                assert!(rel < 1e-10, "k={k} dense={dense} rel={rel:e}");

                let l = weight.factor();
                assert!((&l * l.adjoint() - weight.to_dense()).norm() < 1e-10 * weight.to_dense().norm());

                for _ in 0..5 {
                    let probe = g.atom(&Position::new(40.0 * next(), 30.0 + 40.0 * next())).unwrap();
                    let (s, mu) = stats_from_cache(&cache, &probe).unwrap();
                    let psi = probe.values();
                    let s_dense = 1.0 / (psi.adjoint() * &wm * psi)[(0, 0)].re;
                    let mu_dense = (psi.adjoint() * &wm * &y)[(0, 0)] * s_dense;
                    assert!((s - s_dense).abs() <= 1e-10 * s_dense);
                    assert!((mu - mu_dense).norm() <= 1e-10 * mu_dense.norm());
                }
            }
        }
    }

    #[test]
    fn probe_orthogonal_to_active_atoms_keeps_empty_set_variance() {
        let g = radar();
        // far apart in range: atoms are numerically orthogonal only approximately,
        // so construct an exactly orthogonal probe by projection
        let a = g.atom(&Position::new(0.0, 30.0)).unwrap();
        let b = g.atom(&Position::new(5.0, 50.0)).unwrap();
        let proj = b.values() - a.values() * a.values().dotc(b.values());
        let probe = Atom(proj.clone() / Complex64::from(proj.norm()));
        let y = DVector::from_element(135, c(0.3));
        let w = NoiseWeight::scaled(1.5, 135);
        let empty = build_factor_cache(&[], &[], &w, &y).unwrap();
        let one = build_factor_cache(&[&a], &[0.2], &w, &y).unwrap();
        let (s0, _) = stats_from_cache(&empty, &probe).unwrap();
        let (s1, _) = stats_from_cache(&one, &probe).unwrap();
        assert!((s0 - s1).abs() < 1e-12 * s0);
    }

    #[test]
    fn probing_an_active_atom_with_tiny_gamma_is_degenerate() {
        let g = radar();
        let a = g.atom(&Position::new(0.0, 30.0)).unwrap();
        let y = DVector::from_element(135, c(0.3));
        let cache = build_factor_cache(&[&a], &[1e-14], &NoiseWeight::scaled(1.0, 135), &y).unwrap();
        assert!(matches!(stats_from_cache(&cache, &a), Err(Error::DegenerateStatistics(_))));
    }

    #[test]
    fn rejects_inactive_gammas() {
        let g = radar();
        let a = g.atom(&Position::new(0.0, 30.0)).unwrap();
        let y = DVector::zeros(135);
        let w = NoiseWeight::scaled(1.0, 135);
        assert!(build_factor_cache(&[&a], &[f64::INFINITY], &w, &y).is_err());
        assert!(build_factor_cache(&[&a], &[0.0], &w, &y).is_err());
    }
}
