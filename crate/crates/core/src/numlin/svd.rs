//! One-sided (Hestenes) Jacobi SVD for dense complex matrices.
//!
//! The tall orientation is orthogonalized column by column with complex
//! Jacobi rotations until every column pair is orthogonal to working
//! precision. A warm-start basis may be supplied; when it is close to the
//! right singular vectors the sweep count drops to one or two.

use super::matrix::{dotc, norm2, DenseMatrix, C64, ZERO};
use crate::error::{Error, Result};

/// Sweep cap before the decomposition reports non-convergence.
pub const MAX_SWEEPS: usize = 80;

/// Relative off-orthogonality below which a column pair is left alone.
const ROTATION_TOL: f64 = 1e-15;

/// Singular values below this fraction of the largest get their left vector
/// re-orthogonalized explicitly.
const SMALL_SIGMA: f64 = 1e-6;

/// Compact SVD `A = U diag(sigma) V*` with `k = min(rows, cols)`.
#[derive(Clone, Debug)]
pub struct SvdResult {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// `U diag(sigma) V*` using only the first `k` triples.
    pub fn reconstruct(&self, k: usize) -> DenseMatrix {
        let k = k.min(self.sigma.len());
        let (m, n) = (self.u.rows(), self.v.rows());
        let mut out = DenseMatrix::zeros(m, n);
        for t in 0..k {
            let s = self.sigma[t];
            if s == 0.0 {
                continue;
            }
            let ut = self.u.col(t);
            let vt = self.v.col(t);
            for j in 0..n {
                let coef = vt[j].conj() * s;
                let oc = out.col_mut(j);
                for (o, &ui) in oc.iter_mut().zip(ut) {
                    *o += ui * coef;
                }
            }
        }
        out
    }

    pub fn nuclear_norm(&self) -> f64 {
        self.sigma.iter().sum()
    }

    /// Numerical rank with singular values at or below `rel * sigma_1` dropped.
    pub fn numerical_rank(&self, rel: f64) -> usize {
        let s1 = self.sigma.first().copied().unwrap_or(0.0);
        if s1 == 0.0 {
            return 0;
        }
        self.sigma.iter().filter(|&&s| s > rel * s1).count()
    }
}

/// Compact SVD of `a`.
pub fn svd(a: &DenseMatrix) -> Result<SvdResult> {
    svd_warm(a, None).map(|(r, _)| r)
}

/// SVD warm-started from `basis`, a unitary matrix of size `min(rows, cols)`
/// approximating the singular vectors of the short side. Returns the result
/// and the refined basis for the next call.
pub fn svd_warm(a: &DenseMatrix, basis: Option<&DenseMatrix>) -> Result<(SvdResult, DenseMatrix)> {
    if !a.is_finite() {
        return Err(Error::InvalidArgument("svd input contains NaN or Inf".into()));
    }
    let (m, n) = a.shape();
    let tall = m >= n;
    let k = m.min(n);
    let oriented = if tall { a.clone() } else { a.adjoint() };
    let (w, basis) = match basis {
        Some(b) if b.shape() == (k, k) => (oriented.matmul(b), b.clone()),
        _ => (oriented, DenseMatrix::identity(k)),
    };
    let (w, v) = jacobi_tall(w, basis, (m, n))?;
    let (left, sigma, right) = finish(w, v);
    let next_basis = right.clone();
    let result = if tall {
        SvdResult {
            u: left,
            sigma,
            v: right,
        }
    } else {
        SvdResult {
            u: right,
            sigma,
            v: left,
        }
    };
    Ok((result, next_basis))
}

fn jacobi_tall(
    mut w: DenseMatrix,
    mut v: DenseMatrix,
    dims: (usize, usize),
) -> Result<(DenseMatrix, DenseMatrix)> {
    let n = w.cols();
    if n < 2 {
        return Ok((w, v));
    }
    let mut norms: Vec<f64> = (0..n).map(|j| norm2(w.col(j)).powi(2)).collect();
    for sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma = dotc(w.col(p), w.col(q));
                let g = gamma.norm();
                if g <= ROTATION_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = if zeta == 0.0 {
                    1.0
                } else {
                    zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let e = gamma / g;
                rotate_pair(&mut w, p, q, c, s, e);
                rotate_pair(&mut v, p, q, c, s, e);
                // Closed-form updates drift; recompute from the columns.
                norms[p] = norm2(w.col(p)).powi(2);
                norms[q] = norm2(w.col(q)).powi(2);
            }
        }
        if !rotated {
            return Ok((w, v));
        }
        if sweep + 1 == MAX_SWEEPS {
            break;
        }
    }
    Err(Error::NonConvergence {
        algo: "jacobi svd",
        rows: dims.0,
        cols: dims.1,
        sweeps: MAX_SWEEPS,
    })
}

/// Applies `[p q] <- [c p - s conj(e) q, s e p + c q]`.
#[inline]
pub(crate) fn rotate_pair(mat: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64, e: C64) {
    let sp = e.conj() * s;
    let sq = e * s;
    let (cp, cq) = mat.col_pair_mut(p, q);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let yq = *y;
        *x = xp * c - sp * yq;
        *y = sq * xp + yq * c;
    }
}

fn finish(w: DenseMatrix, v: DenseMatrix) -> (DenseMatrix, Vec<f64>, DenseMatrix) {
    let (m, n) = w.shape();
    let raw: Vec<f64> = (0..n).map(|j| norm2(w.col(j))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| raw[b].total_cmp(&raw[a]).then(a.cmp(&b)));
    let smax = order.first().map_or(0.0, |&i| raw[i]);

    let mut u = DenseMatrix::zeros(m, n);
    let mut vs = DenseMatrix::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        let s = raw[src];
        sigma.push(s);
        vs.col_mut(dst).copy_from_slice(v.col(src));
        if s > 0.0 {
            let inv = 1.0 / s;
            for (o, &x) in u.col_mut(dst).iter_mut().zip(w.col(src)) {
                *o = x * inv;
            }
        }
    }
    for j in 0..n {
        if sigma[j] <= SMALL_SIGMA * smax {
            complete_column(&mut u, j);
        }
    }
    (u, sigma, vs)
}

/// Re-orthogonalizes column `j` against columns `0..j`, falling back to a
/// canonical basis vector when the column has collapsed.
fn complete_column(u: &mut DenseMatrix, j: usize) {
    let m = u.rows();
    let mut cand: Vec<C64> = u.col(j).to_vec();
    if norm2(&cand) > 0.5 && gram_schmidt(u, j, &mut cand) > 0.5 {
        u.col_mut(j).copy_from_slice(&cand);
        return;
    }
    for e in 0..m {
        let mut cand = vec![ZERO; m];
        cand[e] = C64::new(1.0, 0.0);
        if gram_schmidt(u, j, &mut cand) > 1e-3 {
            u.col_mut(j).copy_from_slice(&cand);
            return;
        }
    }
}

/// Two passes of modified Gram-Schmidt against columns `0..j`; normalizes
/// `x` and returns its norm before normalization.
fn gram_schmidt(u: &DenseMatrix, j: usize, x: &mut [C64]) -> f64 {
    for _ in 0..2 {
        for i in 0..j {
            let ui = u.col(i);
            let proj = dotc(ui, x);
            for (xk, &uk) in x.iter_mut().zip(ui) {
                *xk -= uk * proj;
            }
        }
    }
    let nrm = norm2(x);
    if nrm > 0.0 {
        for xk in x.iter_mut() {
            *xk /= nrm;
        }
    }
    nrm
}

/// Singular value soft-thresholding: same singular vectors as `a`, singular
/// values `max(sigma_i - tau, 0)`.
pub fn svt(a: &DenseMatrix, tau: f64) -> Result<DenseMatrix> {
    if tau < 0.0 || !tau.is_finite() {
        return Err(Error::InvalidArgument(format!("svt threshold must be >= 0, got {tau}")));
    }
    if tau == 0.0 {
        return Ok(a.clone());
    }
    let s = svd(a)?;
    Ok(shrink(&s, tau).0)
}

/// Reconstructs the thresholded matrix and returns it with its nuclear norm.
pub(crate) fn shrink(s: &SvdResult, tau: f64) -> (DenseMatrix, f64) {
    let mut shrunk = s.clone();
    let mut nuc = 0.0;
    let mut keep = 0;
    for sv in shrunk.sigma.iter_mut() {
        *sv = (*sv - tau).max(0.0);
        if *sv > 0.0 {
            keep += 1;
            nuc += *sv;
        }
    }
    (shrunk.reconstruct(keep), nuc)
}

pub fn nuclear_norm(a: &DenseMatrix) -> Result<f64> {
    Ok(svd(a)?.nuclear_norm())
}

/// Largest singular value.
pub fn spectral_norm(a: &DenseMatrix) -> Result<f64> {
    Ok(svd(a)?.sigma.first().copied().unwrap_or(0.0))
}
