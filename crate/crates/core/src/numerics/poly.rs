//! Real polynomials and their positive real roots.

use std::ops::{Add, Mul};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Real polynomial with coefficients in ascending degree order.
#[derive(Debug, Clone, PartialEq)]
pub struct RealPolynomial {
    coeffs: Vec<f64>,
}

impl RealPolynomial {
    /// Builds a polynomial, trimming trailing coefficients below
    /// `1e-12 · max |c|`.
    pub fn new(coeffs: Vec<f64>) -> Self {
        let mut p = Self { coeffs };
        p.trim();
        p
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c])
    }

    fn trim(&mut self) {
        let scale = self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        while let Some(&last) = self.coeffs.last() {
            if last.abs() <= 1e-12 * scale || last == 0.0 {
                self.coeffs.pop();
            } else {
                break;
            }
        }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree after trimming; the zero polynomial reports 0.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn derivative(&self) -> Self {
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| i as f64 * c)
                .collect(),
        )
    }

    /// `Σ |c_i| |x|^i`, the natural scale for judging `|P(x)|`.
    pub fn magnitude_at(&self, x: f64) -> f64 {
        let ax = x.abs();
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * ax + c.abs())
    }
}

impl Add for &RealPolynomial {
    type Output = RealPolynomial;

    fn add(self, rhs: &RealPolynomial) -> RealPolynomial {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        RealPolynomial::new(
            (0..n)
                .map(|i| self.coeffs.get(i).unwrap_or(&0.0) + rhs.coeffs.get(i).unwrap_or(&0.0))
                .collect(),
        )
    }
}

impl Mul for &RealPolynomial {
    type Output = RealPolynomial;

    fn mul(self, rhs: &RealPolynomial) -> RealPolynomial {
        if self.is_zero() || rhs.is_zero() {
            return RealPolynomial::new(Vec::new());
        }
        let mut out = vec![0.0; self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        RealPolynomial::new(out)
    }
}

/// Positive real roots of `poly`, ascending.
///
/// Roots come from the eigenvalues of the companion matrix of the
/// variable-balanced polynomial, so coefficient sets spanning many orders
/// of magnitude are handled. An eigenvalue is kept when its imaginary part
/// is at most `imag_tol·(1 + |re|)` and its real part exceeds `pos_tol`,
/// both measured in the balanced variable. Kept roots are polished by
/// Newton steps on the real axis and must satisfy
/// `|P(γ)| ≤ 1e-6 · Σ|c_i|γ^i`. Roots closer than 1e-8 relative are merged.
pub fn positive_real_roots(poly: &RealPolynomial, imag_tol: f64, pos_tol: f64) -> Result<Vec<f64>> {
    if poly.is_zero() {
        return Err(Error::InvalidInput("the zero polynomial has no isolated roots".into()));
    }
    let mut coeffs = poly.coeffs().to_vec();
    // zero roots are never positive; deflate them away
    let lead_zeros = coeffs.iter().take_while(|c| **c == 0.0).count();
    coeffs.drain(..lead_zeros);
    let degree = coeffs.len() - 1;
    if degree == 0 {
        return Ok(Vec::new());
    }

    // Substitute γ = ρ·x so the constant and leading coefficients match.
    let rho = (coeffs[0].abs() / coeffs[degree].abs()).powf(1.0 / degree as f64);
    let mut pw = 1.0;
    let scaled: Vec<f64> = coeffs
        .iter()
        .map(|c| {
            let v = c * pw;
            pw *= rho;
            v
        })
        .collect();
    let balanced = RealPolynomial::new(scaled.clone());
    let lead = scaled[degree];

    let candidates: Vec<f64> = if degree == 1 {
        vec![-scaled[0] / scaled[1]]
    } else {
        let mut companion = DMatrix::<f64>::zeros(degree, degree);
        for i in 1..degree {
            companion[(i, i - 1)] = 1.0;
        }
        for i in 0..degree {
            companion[(i, degree - 1)] = -scaled[i] / lead;
        }
        // Eigenvalues of clustered roots carry rounding noise in their
        // imaginary parts; polish in the complex plane before judging.
        companion
            .complex_eigenvalues()
            .iter()
            .map(|z| polish_complex(&scaled, *z))
            .filter(|z| z.im.abs() <= imag_tol * (1.0 + z.re.abs()))
            .map(|z| z.re)
            .collect()
    };

    let deriv = balanced.derivative();
    let mut roots: Vec<f64> = Vec::new();
    for x0 in candidates {
        if !(x0 > pos_tol) {
            continue;
        }
        let x = polish(&balanced, &deriv, x0);
        if !(x > pos_tol) {
            continue;
        }
        let residual = balanced.eval(x).abs();
        if residual > 1e-6 * balanced.magnitude_at(x) {
            continue;
        }
        roots.push(x * rho);
    }

    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-8 * a.abs().max(b.abs()));
    Ok(roots)
}

fn eval_complex(coeffs: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for c in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

fn polish_complex(coeffs: &[f64], mut z: Complex64) -> Complex64 {
    let (mut p, mut dp) = eval_complex(coeffs, z);
    for _ in 0..20 {
        if p.norm() == 0.0 || dp.norm() == 0.0 {
            break;
        }
        let next = z - p / dp;
        let (pn, dpn) = eval_complex(coeffs, next);
        if !(pn.norm() < p.norm()) {
            break;
        }
        z = next;
        p = pn;
        dp = dpn;
    }
    z
}

/// Newton iterations that only accept steps reducing `|P|`.
fn polish(p: &RealPolynomial, dp: &RealPolynomial, mut x: f64) -> f64 {
    let mut fx = p.eval(x).abs();
    for _ in 0..8 {
        let d = dp.eval(x);
        if d == 0.0 || fx == 0.0 {
            break;
        }
        let next = x - p.eval(x) / d;
        let fn_ = p.eval(next).abs();
        if !(fn_ < fx) {
            break;
        }
        x = next;
        fx = fn_;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const IMAG_TOL: f64 = 1e-8;
    const POS_TOL: f64 = 1e-12;

    fn roots(c: &[f64]) -> Vec<f64> {
        positive_real_roots(&RealPolynomial::new(c.to_vec()), IMAG_TOL, POS_TOL).unwrap()
    }

    #[test]
    fn linear_examples() {
        assert_eq!(roots(&[1.0, -2.0]), vec![0.5]);
        assert!(roots(&[1.0, 1.0]).is_empty());
    }

    #[test]
    fn degree_zero_and_zero_polynomial() {
        assert!(roots(&[3.0]).is_empty());
        assert!(roots(&[3.0, 0.0, 0.0]).is_empty());
        assert!(positive_real_roots(&RealPolynomial::new(vec![0.0, 0.0]), IMAG_TOL, POS_TOL).is_err());
    }

    #[test]
    fn trims_negligible_leading_terms() {
        let p = RealPolynomial::new(vec![1.0, 2.0, 1e-14]);
        assert_eq!(p.degree(), 1);
    }

    #[test]
    fn known_cubic() {
        // (x - 1)(x - 2)(x + 3) = x^3 - 7x + 6
        let r = roots(&[6.0, -7.0, 0.0, 1.0]);
        assert_eq!(r.len(), 2);
        assert!((r[0] - 1.0).abs() < 1e-12 && (r[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_root_is_deflated() {
        // x (x - 4)
        assert_eq!(roots(&[0.0, -4.0, 1.0]), vec![4.0]);
    }

    #[test]
    fn badly_scaled_coefficients() {
        // (1 + 1e9 γ)^2 (1 - 1e12 γ): roots at 1e-12 and -1e-9 (double)
        let a = RealPolynomial::new(vec![1.0, 1e9]);
        let b = RealPolynomial::new(vec![1.0, -1e12]);
        let p = &(&a * &a) * &b;
        let r = positive_real_roots(&p, IMAG_TOL, 0.0).unwrap();
        assert_eq!(r.len(), 1);
        assert!((r[0] - 1e-12).abs() < 1e-20);
    }

    /// Roots by sign changes on a dense logarithmic grid, refined by bisection.
    fn sign_scan_roots(p: &RealPolynomial) -> Vec<f64> {
        let n = 200_000;
        let (lo, hi) = (-8.0f64, 8.0f64);
        let xs: Vec<f64> = (0..=n)
            .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / n as f64))
            .collect();
        let mut out = Vec::new();
        for w in xs.windows(2) {
            let (mut a, mut b) = (w[0], w[1]);
            let (fa, fb) = (p.eval(a), p.eval(b));
            if fa == 0.0 {
                out.push(a);
                continue;
            }
            if fa.signum() == fb.signum() {
                continue;
            }
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if p.eval(m).signum() == fa.signum() {
                    a = m;
                } else {
                    b = m;
                }
            }
            out.push(0.5 * (a + b));
        }
        out
    }

    /// Fixed-point polynomial of a two-sensor instance.
    fn two_sensor_poly(s: [f64; 2], mu2: [f64; 2]) -> RealPolynomial {
        let mut total = RealPolynomial::new(Vec::new());
        for l in 0..2 {
            let j = 1 - l;
            let lin = RealPolynomial::new(vec![1.0, -(mu2[l] - s[l])]);
            let sq = RealPolynomial::new(vec![1.0, s[j]]);
            total = &total + &(&lin * &(&sq * &sq));
        }
        total
    }

    #[test]
    fn cubic_from_two_sensors_matches_sign_scan() {
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut unif = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut nontrivial = 0;
        for _ in 0..200 {
            let s = [0.2 + 3.0 * unif(), 0.2 + 3.0 * unif()];
            let mu2 = [50.0 * unif() * unif(), 50.0 * unif() * unif()];
            let p = two_sensor_poly(s, mu2);
            assert_eq!(p.degree(), 3);
            let fast = positive_real_roots(&p, IMAG_TOL, POS_TOL).unwrap();
            let oracle = sign_scan_roots(&p);
            assert_eq!(fast.len(), oracle.len(), "{p:?}: {fast:?} vs {oracle:?}");
            for (a, b) in fast.iter().zip(&oracle) {
                assert!((a - b).abs() <= 1e-6 * b.abs(), "{a} vs {b}");
                assert!(p.eval(*a).abs() <= 1e-6 * p.magnitude_at(*a));
            }
            nontrivial += usize::from(fast.len() > 1);
        }
        // the scan must also see multi-root cases, not only trivial ones
        assert!(nontrivial > 0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn returned_roots_have_small_residual(
            coeffs in prop::collection::vec(-100.0f64..100.0, 2..9),
        ) {
            let p = RealPolynomial::new(coeffs);
            prop_assume!(p.degree() >= 1);
            for r in positive_real_roots(&p, IMAG_TOL, POS_TOL).unwrap() {
                prop_assert!(r > POS_TOL);
                prop_assert!(p.eval(r).abs() <= 1e-6 * p.magnitude_at(r));
            }
        }

        #[test]
        fn planted_roots_are_recovered(
            // coefficient spread must stay well inside the trimming cutoff
            planted in prop::collection::vec(0.05f64..20.0, 1..6),
            negative in prop::collection::vec(-10.0f64..-0.05, 0..3),
        ) {
            let mut p = RealPolynomial::constant(1.0);
            for r in planted.iter().chain(&negative) {
                p = &p * &RealPolynomial::new(vec![-r, 1.0]);
            }
            let mut sorted = planted.clone();
            sorted.sort_by(f64::total_cmp);
            // well separated planted roots only
            prop_assume!(sorted.windows(2).all(|w| w[1] - w[0] > 1e-2 * w[1]));
            let found = positive_real_roots(&p, IMAG_TOL, POS_TOL).unwrap();
            prop_assert_eq!(found.len(), sorted.len());
            for (f, r) in found.iter().zip(&sorted) {
                prop_assert!((f - r).abs() <= 1e-6 * r, "{} vs {}", f, r);
            }
        }
    }
}
