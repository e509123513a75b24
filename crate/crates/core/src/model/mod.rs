//! Measurement ensembles and the linear maps behind
//! `y_m = |<Phi_m, X>|^2 + xi_m`.
//!
//! Gaussian ensembles store the `M` real matrices densely. Rank-one
//! ensembles (`Phi_m = a_m b_m*`) keep only the factors, so memory and the
//! cost of the forward/adjoint maps stay `O(M (d1 + d2))` per column.

mod noise;
mod rng;

pub use noise::{eta_from_noise, NoiseSpec};
pub use rng::{fnv1a, stream_hash, RngSpec};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::numlin::{dotc, norm2, DenseMatrix, C64, ZERO};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    GaussianIid,
    RankOneComplex,
    Structured,
}

impl EnsembleKind {
    pub fn is_rank_one(self) -> bool {
        matches!(self, EnsembleKind::RankOneComplex | EnsembleKind::Structured)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Store {
    /// `M` column-major real `d1 x d2` blocks, back to back.
    Dense(Vec<f64>),
    /// Columns `a_m` (`d1 x M`) and `b_m` (`d2 x M`).
    Factored { a: DenseMatrix, b: DenseMatrix },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    kind: EnsembleKind,
    d1: usize,
    d2: usize,
    m: usize,
    seed: Option<RngSpec>,
    store: Store,
}

/// One complex standard normal, `(g1 + i g2)/sqrt(2)`, so `E|g|^2 = 1`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn real_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn check_dims(d1: usize, d2: usize, m: usize) -> Result<()> {
    if d1 == 0 || d2 == 0 || m == 0 {
        return Err(Error::InvalidArgument(format!(
            "ensemble dimensions must be positive (d1={d1}, d2={d2}, M={m})"
        )));
    }
    Ok(())
}

/// `M` real matrices with iid `N(0,1)` entries.
pub fn sample_gaussian_iid(d1: usize, d2: usize, m: usize, rng: RngSpec) -> Result<Ensemble> {
    check_dims(d1, d2, m)?;
    let mut r = rng.rng();
    let phi = (0..m * d1 * d2).map(|_| real_normal(&mut r)).collect();
    Ok(Ensemble {
        kind: EnsembleKind::GaussianIid,
        d1,
        d2,
        m,
        seed: Some(rng),
        store: Store::Dense(phi),
    })
}

/// `Phi_m = a_m b_m*` with `a_m ~ CN(0, I_d1)`, `b_m ~ CN(0, I_d2)`.
pub fn sample_rank1_complex(d1: usize, d2: usize, m: usize, rng: RngSpec) -> Result<Ensemble> {
    check_dims(d1, d2, m)?;
    let mut r = rng.rng();
    let a = DenseMatrix::from_fn(d1, m, |_, _| complex_normal(&mut r));
    let b = DenseMatrix::from_fn(d2, m, |_, _| complex_normal(&mut r));
    Ok(Ensemble {
        kind: EnsembleKind::RankOneComplex,
        d1,
        d2,
        m,
        seed: Some(rng),
        store: Store::Factored { a, b },
    })
}

impl Ensemble {
    /// Rank-one ensemble from explicit factor columns.
    pub fn from_factors(kind: EnsembleKind, a: DenseMatrix, b: DenseMatrix) -> Result<Self> {
        if !kind.is_rank_one() {
            return Err(Error::InvalidArgument("factored ensembles must be rank-one kinds".into()));
        }
        if a.cols() != b.cols() {
            return Err(shape_err("from_factors", a.cols(), b.cols()));
        }
        check_dims(a.rows(), b.rows(), a.cols())?;
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidArgument("ensemble factors must be finite".into()));
        }
        Ok(Self {
            kind,
            d1: a.rows(),
            d2: b.rows(),
            m: a.cols(),
            seed: None,
            store: Store::Factored { a, b },
        })
    }

    /// Gaussian-kind ensemble from explicit real matrices.
    pub fn from_dense(mats: &[DenseMatrix]) -> Result<Self> {
        let first = mats
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty ensemble".into()))?;
        let (d1, d2) = first.shape();
        let mut phi = Vec::with_capacity(mats.len() * d1 * d2);
        for m in mats {
            if m.shape() != (d1, d2) {
                return Err(shape_err("from_dense", format!("{d1}x{d2}"), format!("{:?}", m.shape())));
            }
            if !m.is_real() || !m.is_finite() {
                return Err(Error::InvalidArgument("Gaussian ensembles hold finite real matrices".into()));
            }
            phi.extend(m.as_slice().iter().map(|z| z.re));
        }
        Ok(Self {
            kind: EnsembleKind::GaussianIid,
            d1,
            d2,
            m: mats.len(),
            seed: None,
            store: Store::Dense(phi),
        })
    }

    pub(crate) fn from_parts(
        kind: EnsembleKind,
        d1: usize,
        d2: usize,
        m: usize,
        seed: Option<RngSpec>,
        store: Store,
    ) -> Result<Self> {
        check_dims(d1, d2, m)?;
        match (&store, kind) {
            (Store::Dense(phi), EnsembleKind::GaussianIid) => {
                if phi.len() != m * d1 * d2 {
                    return Err(shape_err("ensemble data", m * d1 * d2, phi.len()));
                }
                if phi.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Decode("non-finite ensemble entry".into()));
                }
            }
            (Store::Factored { a, b }, k) if k.is_rank_one() => {
                if a.shape() != (d1, m) || b.shape() != (d2, m) {
                    return Err(shape_err("ensemble factors", format!("{d1}x{m},{d2}x{m}"), format!("{:?},{:?}", a.shape(), b.shape())));
                }
                if !a.is_finite() || !b.is_finite() {
                    return Err(Error::Decode("non-finite ensemble entry".into()));
                }
            }
            _ => return Err(Error::Decode(format!("storage does not match kind {kind:?}"))),
        }
        Ok(Self {
            kind,
            d1,
            d2,
            m,
            seed,
            store,
        })
    }

    pub(crate) fn store(&self) -> &Store {
        &self.store
    }

    pub fn kind(&self) -> EnsembleKind {
        self.kind
    }
    pub fn d1(&self) -> usize {
        self.d1
    }
    pub fn d2(&self) -> usize {
        self.d2
    }
    pub fn num_measurements(&self) -> usize {
        self.m
    }
    pub fn seed(&self) -> Option<RngSpec> {
        self.seed
    }

    /// `(a_m, b_m)` for rank-one kinds.
    pub fn factors(&self, m: usize) -> Option<(&[C64], &[C64])> {
        match &self.store {
            Store::Factored { a, b } => Some((a.col(m), b.col(m))),
            Store::Dense(_) => None,
        }
    }

    /// Factor matrices `[a_1 .. a_M]`, `[b_1 .. b_M]` for rank-one kinds.
    pub fn factor_matrices(&self) -> Option<(&DenseMatrix, &DenseMatrix)> {
        match &self.store {
            Store::Factored { a, b } => Some((a, b)),
            Store::Dense(_) => None,
        }
    }

    fn dense_block(&self, m: usize) -> Option<&[f64]> {
        match &self.store {
            Store::Dense(phi) => {
                let sz = self.d1 * self.d2;
                Some(&phi[m * sz..(m + 1) * sz])
            }
            Store::Factored { .. } => None,
        }
    }

    /// Materializes `Phi_m`.
    pub fn phi(&self, m: usize) -> DenseMatrix {
        match &self.store {
            Store::Dense(_) => {
                let blk = self.dense_block(m).expect("dense");
                DenseMatrix::from_fn(self.d1, self.d2, |i, j| C64::new(blk[j * self.d1 + i], 0.0))
            }
            Store::Factored { a, b } => DenseMatrix::outer(a.col(m), b.col(m)),
        }
    }

    /// Ensemble of `Phi_m^T`, measuring `X^T` exactly as this one measures `X`.
    pub fn transposed(&self) -> Self {
        let store = match &self.store {
            Store::Dense(phi) => {
                let (d1, d2) = (self.d1, self.d2);
                let sz = d1 * d2;
                let mut out = vec![0.0; phi.len()];
                for m in 0..self.m {
                    let src = &phi[m * sz..(m + 1) * sz];
                    let dst = &mut out[m * sz..(m + 1) * sz];
                    for j in 0..d2 {
                        for i in 0..d1 {
                            dst[i * d2 + j] = src[j * d1 + i];
                        }
                    }
                }
                Store::Dense(out)
            }
            // (a b*)^T = conj(b) conj(a)*
            Store::Factored { a, b } => Store::Factored {
                a: b.conj(),
                b: a.conj(),
            },
        };
        Self {
            kind: self.kind,
            d1: self.d2,
            d2: self.d1,
            m: self.m,
            seed: self.seed,
            store,
        }
    }

    fn check_matrix(&self, op: &'static str, x: &DenseMatrix) -> Result<()> {
        if x.shape() != (self.d1, self.d2) {
            return Err(shape_err(op, format!("{}x{}", self.d1, self.d2), format!("{}x{}", x.rows(), x.cols())));
        }
        Ok(())
    }

    /// `z_m = <Phi_m, X> = trace(Phi_m* X)`.
    pub fn forward(&self, x: &DenseMatrix) -> Result<Vec<C64>> {
        self.check_matrix("forward_map", x)?;
        Ok(match &self.store {
            Store::Dense(phi) => {
                let sz = self.d1 * self.d2;
                let xs = x.as_slice();
                phi.chunks_exact(sz)
                    .map(|blk| {
                        let mut re = 0.0;
                        let mut im = 0.0;
                        for (p, z) in blk.iter().zip(xs) {
                            re += p * z.re;
                            im += p * z.im;
                        }
                        C64::new(re, im)
                    })
                    .collect()
            }
            Store::Factored { a, b } => {
                let xb = x.matmul(b);
                (0..self.m).map(|m| dotc(a.col(m), xb.col(m))).collect()
            }
        })
    }

    /// `sum_m z_m Phi_m`, the adjoint of [`Ensemble::forward`].
    pub fn adjoint(&self, z: &[C64]) -> Result<DenseMatrix> {
        if z.len() != self.m {
            return Err(shape_err("adjoint_map", self.m, z.len()));
        }
        let mut out = DenseMatrix::zeros(self.d1, self.d2);
        match &self.store {
            Store::Dense(phi) => {
                let sz = self.d1 * self.d2;
                let os = out.as_mut_slice();
                for (blk, &zm) in phi.chunks_exact(sz).zip(z) {
                    if zm == ZERO {
                        continue;
                    }
                    for (o, &p) in os.iter_mut().zip(blk) {
                        *o += zm * p;
                    }
                }
            }
            Store::Factored { a, b } => {
                // out[:, j] = sum_m (z_m conj(b_m[j])) a_m
                for j in 0..self.d2 {
                    let oc = out.col_mut(j);
                    for m in 0..self.m {
                        let coef = z[m] * b.col(m)[j].conj();
                        if coef == ZERO {
                            continue;
                        }
                        for (o, &ai) in oc.iter_mut().zip(a.col(m)) {
                            *o += ai * coef;
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Power-iteration lower estimate of the operator norm of the forward
    /// map (Frobenius to l2). Nondecreasing in `iters`.
    pub fn opnorm_estimate(&self, iters: usize, rng: RngSpec) -> Result<f64> {
        if iters == 0 {
            return Err(Error::InvalidArgument("opnorm_estimate needs iters >= 1".into()));
        }
        let mut r = rng.rng();
        let mut x = DenseMatrix::from_fn(self.d1, self.d2, |_, _| complex_normal(&mut r));
        let n0 = x.fro_norm();
        x = x.scale_real(1.0 / n0);
        let mut best: f64 = 0.0;
        for _ in 0..iters {
            let ax = self.forward(&x)?;
            best = best.max(norm2(&ax));
            let w = self.adjoint(&ax)?;
            let nw = w.fro_norm();
            if nw == 0.0 {
                break;
            }
            x = w.scale_real(1.0 / nw);
        }
        Ok(best)
    }
}

/// Phaseless measurements. `y = clean + xi` when produced by [`measure`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observations {
    pub y: Vec<f64>,
    pub xi: Vec<f64>,
    pub clean: Vec<f64>,
}

impl Observations {
    /// Observations known only through `y` (noise unknown, recorded as zero).
    pub fn from_y(y: Vec<f64>) -> Self {
        let n = y.len();
        Self {
            clean: y.clone(),
            xi: vec![0.0; n],
            y,
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn mean_y(&self) -> f64 {
        if self.y.is_empty() {
            0.0
        } else {
            self.y.iter().sum::<f64>() / self.y.len() as f64
        }
    }
}

/// `clean_m = |<Phi_m, X>|^2`, `y = clean + noise`.
pub fn measure(ens: &Ensemble, x: &DenseMatrix, noise: Option<&[f64]>) -> Result<Observations> {
    let z = ens.forward(x)?;
    let clean: Vec<f64> = z.iter().map(|v| v.norm_sqr()).collect();
    let xi = match noise {
        Some(n) if n.len() != ens.m => return Err(shape_err("measure noise", ens.m, n.len())),
        Some(n) => n.to_vec(),
        None => vec![0.0; ens.m],
    };
    let y = clean.iter().zip(&xi).map(|(c, e)| c + e).collect();
    Ok(Observations { y, xi, clean })
}

pub fn forward_map(ens: &Ensemble, x: &DenseMatrix) -> Result<Vec<C64>> {
    ens.forward(x)
}

pub fn adjoint_map(ens: &Ensemble, z: &[C64]) -> Result<DenseMatrix> {
    ens.adjoint(z)
}

pub fn opnorm_estimate(ens: &Ensemble, iters: usize, rng: RngSpec) -> Result<f64> {
    ens.opnorm_estimate(iters, rng)
}

/// Random unit vector drawn from `CN(0, I)` and normalized.
pub fn random_unit_complex<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<C64> {
    let mut v: Vec<C64> = (0..n).map(|_| complex_normal(rng)).collect();
    let nrm = norm2(&v);
    v.iter_mut().for_each(|z| *z /= nrm);
    v
}
