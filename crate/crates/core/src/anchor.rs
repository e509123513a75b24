//! Spectral anchors built from partial-trace matrices.
//!
//! Each measurement is compressed before forming the spectral matrix,
//! `Upsilon = (1/M) sum_m y_m Phi_m Psi_m Psi_m* Phi_m*`, so that the
//! leading eigenspace of its expectation is the column space of the target.
//! Rank-one ensembles use `Psi_m = b_m / |b_m|^2`, which reduces `Upsilon`
//! to `(1/M) sum_m y_m a_m a_m*`; Gaussian ensembles use a rowspace estimate
//! `Psi_m = Vhat`. The anchor is always `X0 = U0 V0*` with orthonormal
//! factors; singular values are never estimated.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::metrics::RANK_CUTOFF;
use crate::model::{Ensemble, EnsembleKind};
use crate::numlin::{leading_eigvecs, svd, DenseMatrix, C64, INPUT_ORTHONORMAL_TOL};

/// Largest `d1 * d2` for which the vectorized baseline is allowed.
pub const NAIVE_MAX_DIM: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorMethod {
    Rank1,
    RowToCol,
    Psd,
    NaiveVectorized,
    Oracle,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Anchor {
    pub u0: DenseMatrix,
    pub v0: DenseMatrix,
    pub x0: DenseMatrix,
    pub method: AnchorMethod,
}

impl Anchor {
    /// Builds `X0 = U0 V0*` after checking orthonormality.
    pub fn new(u0: DenseMatrix, v0: DenseMatrix, method: AnchorMethod) -> Result<Self> {
        if u0.cols() != v0.cols() || u0.cols() == 0 {
            return Err(shape_err("anchor factors", u0.cols(), v0.cols()));
        }
        for (name, q) in [("U0", &u0), ("V0", &v0)] {
            let res = q.orthonormality_residual();
            if res > INPUT_ORTHONORMAL_TOL {
                return Err(Error::NotOrthonormal(name, res));
            }
        }
        let x0 = u0.matmul(&v0.adjoint());
        Ok(Self { u0, v0, x0, method })
    }

    pub fn rank(&self) -> usize {
        self.u0.cols()
    }

    /// Same factors with `X0` multiplied by a unit phase (applied to `U0`).
    pub fn rotated(&self, phase: C64) -> Self {
        let u0 = self.u0.scale(phase);
        let x0 = u0.matmul(&self.v0.adjoint());
        Self {
            u0,
            v0: self.v0.clone(),
            x0,
            method: self.method,
        }
    }
}

fn check_y(ens: &Ensemble, y: &[f64]) -> Result<()> {
    if y.len() != ens.num_measurements() {
        return Err(shape_err("anchor observations", ens.num_measurements(), y.len()));
    }
    if y.iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate("all observations are zero".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("observations must be finite".into()));
    }
    Ok(())
}

/// Accumulates `(1/M) sum_m w_m c_m c_m*` over the columns `c_m` of `cols`,
/// filling the upper triangle and mirroring so the result is exactly Hermitian.
fn weighted_gram(cols: &DenseMatrix, w: &[f64]) -> DenseMatrix {
    let d = cols.rows();
    let mut g = DenseMatrix::zeros(d, d);
    for (m, &wm) in w.iter().enumerate() {
        if wm == 0.0 {
            continue;
        }
        let c = cols.col(m);
        for j in 0..d {
            let cj = c[j].conj() * wm;
            for i in 0..=j {
                g[(i, j)] += c[i] * cj;
            }
        }
    }
    let inv = 1.0 / w.len() as f64;
    for j in 0..d {
        for i in 0..j {
            let v = g[(i, j)] * inv;
            g[(i, j)] = v;
            g[(j, i)] = v.conj();
        }
        g[(j, j)] = C64::new(g[(j, j)].re * inv, 0.0);
    }
    g
}

/// Partial-trace matrices `(Upsilon, Upsilon')` for a rank-one ensemble:
/// `(1/M) sum y_m a_m a_m*` and `(1/M) sum y_m b_m b_m*`.
pub fn upsilon_rank1(ens: &Ensemble, y: &[f64]) -> Result<(DenseMatrix, DenseMatrix)> {
    let (a, b) = ens.factor_matrices().ok_or_else(|| {
        Error::InvalidArgument("rank-one initialization needs a rank-one ensemble".into())
    })?;
    if y.len() != ens.num_measurements() {
        return Err(shape_err("upsilon observations", ens.num_measurements(), y.len()));
    }
    Ok((weighted_gram(a, y), weighted_gram(b, y)))
}

/// Leading eigenvectors of the two partial-trace matrices.
pub fn anchor_rank1(ens: &Ensemble, y: &[f64]) -> Result<Anchor> {
    if !ens.kind().is_rank_one() {
        return Err(Error::InvalidArgument(format!(
            "rank-one initialization is undefined for {:?} ensembles",
            ens.kind()
        )));
    }
    check_y(ens, y)?;
    let (ups, ups_prime) = upsilon_rank1(ens, y)?;
    let u0 = leading_eigvecs(&ups, 1)?;
    let v0 = leading_eigvecs(&ups_prime, 1)?;
    Anchor::new(u0, v0, AnchorMethod::Rank1)
}

/// `(1/M) sum_m y_m Phi_m Vhat Vhat* Phi_m*` for a Gaussian ensemble.
pub fn upsilon_col_from_row(ens: &Ensemble, y: &[f64], vhat: &DenseMatrix) -> Result<DenseMatrix> {
    if ens.kind() != EnsembleKind::GaussianIid {
        return Err(Error::InvalidArgument(
            "rowspace-to-columnspace refinement expects a Gaussian ensemble".into(),
        ));
    }
    if vhat.rows() != ens.d2() {
        return Err(shape_err("Vhat rows", ens.d2(), vhat.rows()));
    }
    if y.len() != ens.num_measurements() {
        return Err(shape_err("upsilon observations", ens.num_measurements(), y.len()));
    }
    let r = vhat.cols();
    let d1 = ens.d1();
    let m_total = ens.num_measurements();
    // stack W_m = Phi_m Vhat as r columns each, weights repeated
    let mut stacked = DenseMatrix::zeros(d1, m_total * r);
    let mut weights = Vec::with_capacity(m_total * r);
    for m in 0..m_total {
        let w = ens.phi(m).matmul(vhat);
        for k in 0..r {
            stacked.col_mut(m * r + k).copy_from_slice(w.col(k));
            weights.push(y[m]);
        }
    }
    let mut g = weighted_gram(&stacked, &weights);
    // weighted_gram averaged over M*r columns; the definition averages over M
    g = g.scale_real(r as f64);
    Ok(g)
}

/// Column-space estimate from a rowspace estimate `Vhat` (`d2 x r`).
pub fn anchor_col_from_row(ens: &Ensemble, y: &[f64], vhat: &DenseMatrix) -> Result<DenseMatrix> {
    let r = vhat.cols();
    if r == 0 || r > ens.d1().min(ens.d2()) {
        return Err(Error::InvalidArgument(format!(
            "rank {r} exceeds min(d1, d2) = {}",
            ens.d1().min(ens.d2())
        )));
    }
    let res = vhat.orthonormality_residual();
    if res > INPUT_ORTHONORMAL_TOL {
        return Err(Error::NotOrthonormal("Vhat", res));
    }
    check_y(ens, y)?;
    let ups = upsilon_col_from_row(ens, y, vhat)?;
    leading_eigvecs(&ups, r)
}

/// Rowspace estimate from a column-space estimate, by running the
/// column-space refinement on the transposed problem.
pub fn anchor_row_from_col(ens: &Ensemble, y: &[f64], uhat: &DenseMatrix) -> Result<DenseMatrix> {
    anchor_col_from_row(&ens.transposed(), y, uhat)
}

/// Symmetric PSD targets: `X0 = U0 U0*` with `U0` refined from `Vhat`.
pub fn anchor_psd(ens: &Ensemble, y: &[f64], vhat: &DenseMatrix) -> Result<Anchor> {
    if ens.d1() != ens.d2() {
        return Err(Error::InvalidArgument("PSD anchors need a square problem".into()));
    }
    let u0 = anchor_col_from_row(ens, y, vhat)?;
    Anchor::new(u0.clone(), u0, AnchorMethod::Psd)
}

/// Vectorized spectral baseline: leading eigenvector of
/// `(1/M) sum y_m vec(Phi_m) vec(Phi_m)*`, reshaped and truncated to rank `r`.
pub fn anchor_naive_vectorized(ens: &Ensemble, y: &[f64], r: usize) -> Result<Anchor> {
    let (d1, d2) = (ens.d1(), ens.d2());
    if d1 * d2 > NAIVE_MAX_DIM {
        return Err(Error::TooLarge(d1 * d2, NAIVE_MAX_DIM));
    }
    if r == 0 || r > d1.min(d2) {
        return Err(Error::InvalidArgument(format!("rank {r} out of range")));
    }
    check_y(ens, y)?;
    let m_total = ens.num_measurements();
    let mut vecs = DenseMatrix::zeros(d1 * d2, m_total);
    for m in 0..m_total {
        vecs.col_mut(m).copy_from_slice(ens.phi(m).as_slice());
    }
    let rhat = weighted_gram(&vecs, y);
    let lead = leading_eigvecs(&rhat, 1)?;
    let shaped = lead.reshape(d1, d2)?;
    let s = svd(&shaped)?;
    Anchor::new(s.u.leading_cols(r), s.v.leading_cols(r), AnchorMethod::NaiveVectorized)
}

/// Factors of the truth's compact SVD; the ideal anchor.
pub fn anchor_oracle(xsharp: &DenseMatrix) -> Result<Anchor> {
    let s = svd(xsharp)?;
    let r = s.numerical_rank(RANK_CUTOFF);
    if r == 0 {
        return Err(Error::InvalidArgument("oracle anchor of a zero matrix".into()));
    }
    Anchor::new(s.u.leading_cols(r), s.v.leading_cols(r), AnchorMethod::Oracle)
}

/// `min_z ||X0 - z U V*||_F / ||U V*||_F` over unit-modulus `z` (complex) or
/// `z = +-1` (real), where `U V*` are the truth's compact singular factors.
pub fn anchor_quality(anchor: &Anchor, xsharp: &DenseMatrix) -> Result<f64> {
    if anchor.x0.shape() != xsharp.shape() {
        return Err(shape_err(
            "anchor_quality",
            format!("{:?}", xsharp.shape()),
            format!("{:?}", anchor.x0.shape()),
        ));
    }
    let s = svd(xsharp)?;
    let r = s.numerical_rank(RANK_CUTOFF);
    if r != anchor.rank() {
        return Err(Error::InvalidArgument(format!(
            "anchor rank {} does not match target rank {r}",
            anchor.rank()
        )));
    }
    let t = s.u.leading_cols(r).matmul(&s.v.leading_cols(r).adjoint());
    let ip = t.inner(&anchor.x0);
    let overlap = if anchor.x0.is_real() && xsharp.is_real() {
        ip.re.abs()
    } else {
        ip.norm()
    };
    let rf = r as f64;
    Ok((2.0 * rf - 2.0 * overlap).max(0.0).sqrt() / rf.sqrt())
}
