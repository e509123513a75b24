//! Error measures under the global phase (or sign) ambiguity, and the
//! anchor-quality condition of the general-rank recovery guarantee.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::numlin::{dotc, norm2, svd, DenseMatrix, C64, INPUT_ORTHONORMAL_TOL};

/// Singular values at or below this fraction of `sigma_1` count as zero
/// when computing the condition number.
pub const RANK_CUTOFF: f64 = 1e-10;

// Cancellation can leave slightly negative radicands; clamp before sqrt.
fn clamped_sqrt(x: f64) -> f64 {
    x.max(0.0).sqrt()
}

/// `inf_theta ||A - e^{i theta} B||_F`.
pub fn phase_dist(a: &DenseMatrix, b: &DenseMatrix) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(shape_err("phase_dist", format!("{:?}", a.shape()), format!("{:?}", b.shape())));
    }
    // explicit difference; the expanded form loses half the digits near zero
    let z = phase_align(a, b);
    Ok(a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - z * y).norm_sqr())
        .sum::<f64>()
        .sqrt())
}

/// Minimizing phase `e^{i theta}` of [`phase_dist`], i.e. the phase of `<B, A>`.
pub fn phase_align(a: &DenseMatrix, b: &DenseMatrix) -> C64 {
    let ip = b.inner(a);
    if ip.norm() == 0.0 {
        C64::new(1.0, 0.0)
    } else {
        ip / ip.norm()
    }
}

/// `min(||A - B||_F, ||A + B||_F)` for real matrices.
pub fn sign_dist(a: &DenseMatrix, b: &DenseMatrix) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(shape_err("sign_dist", format!("{:?}", a.shape()), format!("{:?}", b.shape())));
    }
    if !a.is_real() || !b.is_real() {
        return Err(Error::InvalidArgument("sign_dist is defined for real matrices".into()));
    }
    Ok((a - b).fro_norm().min((a + b).fro_norm()))
}

/// `sqrt(1 - |<u,v>|^2 / (|u|^2 |v|^2))`.
pub fn vec_sin_angle(u: &[C64], v: &[C64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(shape_err("vec_sin_angle", u.len(), v.len()));
    }
    let (nu, nv) = (norm2(u), norm2(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::InvalidArgument("vec_sin_angle of a zero vector".into()));
    }
    let c = dotc(u, v).norm() / (nu * nv);
    Ok(clamped_sqrt(1.0 - c * c))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryConditionCheck {
    pub kappa: f64,
    pub rank: usize,
    pub delta: f64,
    pub lambda: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
    pub margin: f64,
}

/// Evaluates `delta / (1 - lambda) <= 0.45 (2.8 - kappa)`.
pub fn check_recovery_condition(xsharp: &DenseMatrix, delta: f64, lambda: f64) -> Result<RecoveryConditionCheck> {
    check_recovery_condition_with_cutoff(xsharp, delta, lambda, RANK_CUTOFF)
}

pub fn check_recovery_condition_with_cutoff(
    xsharp: &DenseMatrix,
    delta: f64,
    lambda: f64,
    cutoff: f64,
) -> Result<RecoveryConditionCheck> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("lambda must lie in [0,1), got {lambda}")));
    }
    let s = svd(xsharp)?;
    let rank = s.numerical_rank(cutoff);
    if rank == 0 {
        return Err(Error::InvalidArgument("condition number of a zero matrix".into()));
    }
    let kappa = s.sigma[0] / s.sigma[rank - 1];
    let lhs = delta / (1.0 - lambda);
    let rhs = 0.45 * (2.8 - kappa);
    Ok(RecoveryConditionCheck {
        kappa,
        rank,
        delta,
        lambda,
        lhs,
        rhs,
        satisfied: kappa < 2.8 && lhs <= rhs,
        margin: rhs - lhs,
    })
}

/// `||U0 U0* - U U*||_F` through `sqrt(2r - 2 ||U0* U||_F^2)`.
pub fn psd_anchor_error(u0: &DenseMatrix, usharp: &DenseMatrix) -> Result<f64> {
    if u0.shape() != usharp.shape() {
        return Err(shape_err("psd_anchor_error", format!("{:?}", usharp.shape()), format!("{:?}", u0.shape())));
    }
    for (name, u) in [("U0", u0), ("Usharp", usharp)] {
        let res = u.orthonormality_residual();
        if res > INPUT_ORTHONORMAL_TOL * u.cols() as f64 {
            return Err(Error::NotOrthonormal(name, res));
        }
    }
    let r = u0.cols() as f64;
    let overlap = u0.adjoint_mul(usharp).fro_norm_sqr();
    Ok(clamped_sqrt(2.0 * r - 2.0 * overlap))
}
