//! Numerical kernels used by the solvers.

mod cache;
mod chol;
mod optimize;
mod poly;

pub use cache::{build_factor_cache, stats_from_cache, FactorCache, NoiseWeight};
pub use chol::{cholesky_hermitian, hermitian_logdet, solve_hermitian};
pub use optimize::{maximize_2d, BoundedMaxProblem, MaxResult};
pub use poly::{positive_real_roots, RealPolynomial};
