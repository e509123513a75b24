//! Cyclic two-sided Jacobi eigensolver for Hermitian matrices.

use super::matrix::{normalize_phase, DenseMatrix, C64};
use super::svd::rotate_pair;
use crate::error::{Error, Result};

pub const MAX_SWEEPS: usize = 100;

/// Relative asymmetry accepted as Hermitian input.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Eigenpairs sorted by algebraically decreasing eigenvalue.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

/// Full eigendecomposition of the Hermitian part of `a`.
pub fn hermitian_eigen(a: &DenseMatrix) -> Result<HermitianEigen> {
    if a.rows() != a.cols() {
        return Err(Error::InvalidArgument(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let defect = a.hermitian_defect();
    if defect > HERMITIAN_TOL {
        return Err(Error::NotHermitian(defect));
    }
    let n = a.rows();
    let mut h = a.hermitian_part();
    for i in 0..n {
        h[(i, i)] = C64::new(h[(i, i)].re, 0.0);
    }
    let mut v = DenseMatrix::identity(n);
    let scale = h.fro_norm();
    let mut converged = n < 2 || scale == 0.0;
    let mut sweep = 0;
    while !converged && sweep < MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|j| (0..n).filter(move |&i| i != j).map(move |i| (i, j)))
            .map(|(i, j)| h[(i, j)].norm_sqr())
            .sum();
        if off.sqrt() <= 1e-15 * scale {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = h[(p, q)];
                let g = apq.norm();
                if g <= 1e-300 || g <= 1e-17 * (h[(p, p)].re.abs() + h[(q, q)].re.abs()) {
                    h[(p, q)] = C64::new(0.0, 0.0);
                    h[(q, p)] = C64::new(0.0, 0.0);
                    continue;
                }
                let zeta = (h[(q, q)].re - h[(p, p)].re) / (2.0 * g);
                let t = if zeta == 0.0 {
                    1.0
                } else {
                    zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let e = apq / g;
                // H <- H J
                rotate_pair(&mut h, p, q, c, s, e);
                // H <- J* H
                for k in 0..n {
                    let xp = h[(p, k)];
                    let yq = h[(q, k)];
                    h[(p, k)] = xp * c - e * s * yq;
                    h[(q, k)] = e.conj() * s * xp + yq * c;
                }
                h[(p, q)] = C64::new(0.0, 0.0);
                h[(q, p)] = C64::new(0.0, 0.0);
                h[(p, p)] = C64::new(h[(p, p)].re, 0.0);
                h[(q, q)] = C64::new(h[(q, q)].re, 0.0);
                rotate_pair(&mut v, p, q, c, s, e);
            }
        }
        sweep += 1;
    }
    if !converged {
        return Err(Error::NonConvergence {
            algo: "jacobi eigensolver",
            rows: n,
            cols: n,
            sweeps: MAX_SWEEPS,
        });
    }
    let raw: Vec<f64> = (0..n).map(|i| h[(i, i)].re).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| raw[b].total_cmp(&raw[a]).then(a.cmp(&b)));
    let mut vectors = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.col_mut(dst).copy_from_slice(v.col(src));
        normalize_phase(vectors.col_mut(dst));
    }
    Ok(HermitianEigen {
        values: order.iter().map(|&i| raw[i]).collect(),
        vectors,
    })
}

/// Eigenvectors for the `r` algebraically largest eigenvalues, each with its
/// largest-magnitude entry made real positive.
pub fn leading_eigvecs(a: &DenseMatrix, r: usize) -> Result<DenseMatrix> {
    leading_eigpairs(a, r).map(|(_, v)| v)
}

pub fn leading_eigpairs(a: &DenseMatrix, r: usize) -> Result<(Vec<f64>, DenseMatrix)> {
    if r == 0 || r > a.rows() {
        return Err(Error::InvalidArgument(format!(
            "requested {r} eigenvectors of a {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    let e = hermitian_eigen(a)?;
    Ok((e.values[..r].to_vec(), e.vectors.leading_cols(r)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numlin::matrix::{dotc, norm2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_hermitian(n: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DenseMatrix::from_fn(n, n, |_, _| {
            C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
        });
        (&g + &g.adjoint()).scale_real(0.5)
    }

    fn residuals_ok(a: &DenseMatrix, e: &HermitianEigen) {
        let anorm = a.fro_norm();
        for k in 0..a.rows() {
            let v = e.vectors.col(k);
            let av = a.mul_vec(v);
            let res: f64 = av
                .iter()
                .zip(v)
                .map(|(x, y)| (x - y * e.values[k]).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(res <= 1e-9 * anorm, "residual {res}");
        }
        assert!(e.vectors.orthonormality_residual() < 1e-12);
    }

    #[test]
    fn diagonal_case() {
        let a = DenseMatrix::diag(&[3.0, 2.0, 1.0]);
        let v = leading_eigvecs(&a, 1).unwrap();
        assert!((v[(0, 0)] - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!(v[(1, 0)].norm() < 1e-15 && v[(2, 0)].norm() < 1e-15);
    }

    #[test]
    fn degenerate_identity_residual_only() {
        let a = DenseMatrix::identity(3);
        let e = hermitian_eigen(&a).unwrap();
        residuals_ok(&a, &e);
        assert!(leading_eigvecs(&a, 2).unwrap().orthonormality_residual() < 1e-12);
    }

    #[test]
    fn random_hermitian_sorted_with_small_residual() {
        for seed in 0..5 {
            let a = random_hermitian(9, seed);
            let e = hermitian_eigen(&a).unwrap();
            assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
            residuals_ok(&a, &e);
        }
    }

    #[test]
    fn spiked_identity_recovers_spike() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut u: Vec<C64> = (0..6)
            .map(|_| C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
            .collect();
        let n = norm2(&u);
        u.iter_mut().for_each(|z| *z /= n);
        let a = &DenseMatrix::outer(&u, &u) + &DenseMatrix::identity(6).scale_real(0.5);
        let v = leading_eigvecs(&a, 1).unwrap();
        let c = dotc(v.col(0), &u).norm();
        assert!((1.0 - c * c).max(0.0).sqrt() < 1e-8);
        let big = v.col(0).iter().map(|z| z.norm()).fold(0.0, f64::max);
        let pos = v.col(0).iter().find(|z| z.norm() == big).unwrap();
        assert!(pos.im == 0.0 && pos.re > 0.0);
    }

    #[test]
    fn rejects_non_hermitian() {
        let a = DenseMatrix::from_real_rows(2, 2, &[1.0, 2.0, 0.0, 1.0]).unwrap();
        assert!(matches!(hermitian_eigen(&a), Err(Error::NotHermitian(_))));
        assert!(leading_eigvecs(&DenseMatrix::identity(2), 3).is_err());
    }
}
