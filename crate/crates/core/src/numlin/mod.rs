//! Dense complex linear algebra: Jacobi SVD and Hermitian eigensolver,
//! singular value thresholding, the unitary DFT, and subspace angles.
//!
//! Every routine is a pure function of its inputs with no internal
//! parallelism, so results are bitwise reproducible.

mod eig;
mod matrix;
mod svd;

pub use eig::{hermitian_eigen, leading_eigpairs, leading_eigvecs, HermitianEigen, HERMITIAN_TOL};
pub use matrix::{dotc, norm2, normalize_phase, DenseMatrix, C64, ONE, ZERO};
pub use svd::{nuclear_norm, spectral_norm, svd, svd_warm, svt, SvdResult};
pub(crate) use svd::shrink;

use crate::error::{shape_err, Error, Result};

/// Relative reconstruction tolerance guaranteed by [`svd`].
pub const SVD_RECONSTRUCTION_TOL: f64 = 1e-8;
/// Orthonormality tolerance (per column) guaranteed by [`svd`].
pub const ORTHONORMAL_TOL: f64 = 1e-10;
/// Orthonormality tolerance accepted for inputs to angle computations.
pub const INPUT_ORTHONORMAL_TOL: f64 = 1e-8;

/// Largest principal-angle sine between two orthonormal bases,
/// `||(I - U1 U1*) U2||`.
pub fn subspace_sin(u1: &DenseMatrix, u2: &DenseMatrix) -> Result<f64> {
    if u1.rows() != u2.rows() {
        return Err(shape_err("subspace_sin", u1.rows(), u2.rows()));
    }
    for (name, u) in [("first basis", u1), ("second basis", u2)] {
        let res = u.orthonormality_residual();
        if res > INPUT_ORTHONORMAL_TOL * (u.cols().max(1) as f64) {
            return Err(Error::NotOrthonormal(name, res));
        }
    }
    let proj = u1.matmul(&u1.adjoint_mul(u2));
    let resid = u2 - &proj;
    Ok(spectral_norm(&resid)?.clamp(0.0, 1.0))
}

/// Unitary DFT matrix, `F[j,k] = exp(-2 pi i jk / M) / sqrt(M)`.
pub fn dft_matrix(m: usize) -> Result<DenseMatrix> {
    if m == 0 {
        return Err(Error::InvalidArgument("DFT size must be >= 1".into()));
    }
    let scale = 1.0 / (m as f64).sqrt();
    Ok(DenseMatrix::from_fn(m, m, |j, k| {
        // reduce jk mod M first so the angle stays small and exact
        let idx = (j * k) % m;
        let theta = -2.0 * std::f64::consts::PI * idx as f64 / m as f64;
        C64::from_polar(scale, theta)
    }))
}

/// `(x * h)[n] = sum_k x[k] h[(n - k) mod M]`.
pub fn circular_convolve(x: &[C64], h: &[C64]) -> Result<Vec<C64>> {
    if x.len() != h.len() {
        return Err(shape_err("circular_convolve", x.len(), h.len()));
    }
    let m = x.len();
    Ok((0..m)
        .map(|n| {
            (0..m)
                .map(|k| x[k] * h[(n + m - k) % m])
                .sum::<C64>()
        })
        .collect())
}
