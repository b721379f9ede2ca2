use log::debug;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Lower factor `G` with `G·Gᴴ = A + δ·I`.
///
/// `δ` starts at `jitter` and is only escalated (geometrically, by 10×, up to
/// `1e-6·tr(A)/n`) when the factorization of the previous attempt fails.
pub fn cholesky_hermitian(a: &DMatrix<Complex64>, jitter: f64) -> Result<DMatrix<Complex64>> {
    factorize(a, jitter).map(|c| c.l())
}

fn factorize(a: &DMatrix<Complex64>, jitter: f64) -> Result<Cholesky<Complex64, Dyn>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::InvalidInput(format!("matrix is {}x{}, not square", n, a.ncols())));
    }
    if n == 0 {
        return Ok(Cholesky::new(a.clone()).expect("empty matrix factorizes"));
    }
    let scale = a.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            asym = asym.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    if asym > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::InvalidInput(format!(
            "matrix is not Hermitian (asymmetry {asym:e})"
        )));
    }

    let trace: f64 = (0..n).map(|i| a[(i, i)].re).sum();
    let cap = 1e-6 * trace.abs() / n as f64;
    let mut delta = jitter.max(0.0);
    loop {
        let mut shifted = a.clone();
        for i in 0..n {
            shifted[(i, i)] += delta;
        }
        // nalgebra's complex factorization takes square roots without
        // checking the sign of the real pivot, so verify it here
        if let Some(c) = Cholesky::new(shifted).filter(|c| {
            let l = c.l_dirty();
            (0..n).all(|i| l[(i, i)].re > 0.0 && l[(i, i)].im.abs() <= 1e-12 * l[(i, i)].re)
        }) {
            if delta > jitter {
                debug!("cholesky needed jitter {delta:e} (cap {cap:e})");
            }
            return Ok(c);
        }
        if delta >= cap || !cap.is_finite() || cap == 0.0 {
            return Err(Error::Numerical(format!(
                "matrix not positive definite within jitter cap {cap:e}"
            )));
        }
        delta = if delta == 0.0 { (1e-15 * trace.abs() / n as f64).min(cap) } else { (delta * 10.0).min(cap) };
    }
}

/// Solves `A·x = b` for Hermitian positive-definite `A` (jittered if needed).
pub fn solve_hermitian(a: &DMatrix<Complex64>, b: &DVector<Complex64>) -> Result<DVector<Complex64>> {
    Ok(factorize(a, 0.0)?.solve(b))
}

/// `log det A` for Hermitian positive-definite `A`.
pub fn hermitian_logdet(a: &DMatrix<Complex64>) -> Result<f64> {
    let l = cholesky_hermitian(a, 0.0)?;
    Ok(2.0 * (0..l.nrows()).map(|i| l[(i, i)].re.ln()).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn rel_err(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn identity_and_diagonal() {
        let i = DMatrix::<Complex64>::identity(4, 4);
        assert_eq!(cholesky_hermitian(&i, 0.0).unwrap(), i);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![c(4.0, 0.0), c(9.0, 0.0)]));
        let l = cholesky_hermitian(&d, 0.0).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![c(2.0, 0.0), c(3.0, 0.0)]));
        assert!(rel_err(&l, &expected) < 1e-15);
    }

    #[test]
    fn random_gram_plus_identity_reconstructs() {
        let mut seed = 12345u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        for n in [1usize, 3, 8, 20] {
            let b = DMatrix::from_fn(n + 2, n, |_, _| c(next(), next()));
            let a = b.adjoint() * &b + DMatrix::identity(n, n);
            let l = cholesky_hermitian(&a, 0.0).unwrap();
            assert!(rel_err(&(&l * l.adjoint()), &a) < 1e-9);
            for i in 0..n {
                for j in i + 1..n {
                    assert_eq!(l[(i, j)], c(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn semidefinite_matrix_gets_jitter() {
        // rank one: v vᴴ
        let v = DVector::from_vec(vec![c(1.0, 1.0), c(2.0, 0.0), c(0.0, -1.0)]);
        let a = &v * v.adjoint();
        let l = cholesky_hermitian(&a, 0.0).unwrap();
        let trace: f64 = (0..3).map(|i| a[(i, i)].re).sum();
        assert!((&l * l.adjoint() - &a).norm() <= 2e-6 * trace);
    }

    #[test]
    fn indefinite_and_non_hermitian_fail() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![c(1.0, 0.0), c(-1.0, 0.0)]));
        assert!(matches!(cholesky_hermitian(&a, 0.0), Err(Error::Numerical(_))));
        let b = DMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(2.0, 0.0)]);
        assert!(matches!(cholesky_hermitian(&b, 0.0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn logdet_and_solve() {
        let a = DMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)]);
        assert!((hermitian_logdet(&a).unwrap() - 3f64.ln()).abs() < 1e-14);
        let b = DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let x = solve_hermitian(&a, &b).unwrap();
        assert!((&a * &x - &b).norm() < 1e-14);
    }
}
