//! Blind deconvolution from Fourier magnitudes.
//!
//! Signals live in known subspaces, `x = D u` and `h = E conj(v)`, and only
//! `|F (x conv h)|^2` is observed. With the unitary DFT `F` the observation
//! at frequency `m` equals `M |a_m* u v* b_m|^2` where `a_m` is the conjugate
//! of row `m` of `F D` and `b_m` is row `m` of `F E`, so recovering `u v*` is a
//! rank-one lifted problem. Lifted observations here never carry the factor
//! `M`; divide raw magnitudes by `M` before calling [`recover_signals`].

use crate::anchor::anchor_rank1;
use crate::error::{shape_err, Error, Result};
use crate::model::{Ensemble, EnsembleKind, Observations};
use crate::numlin::{circular_convolve, dft_matrix, normalize_phase, svd, DenseMatrix, C64};
use crate::solver::{solve, SolveReport, SolveStatus, SolverConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceModel {
    /// `M x d1` basis for the first signal.
    pub d: DenseMatrix,
    /// `M x d2` basis for the second signal.
    pub e: DenseMatrix,
}

impl SubspaceModel {
    pub fn new(d: DenseMatrix, e: DenseMatrix) -> Result<Self> {
        let sm = Self { d, e };
        sm.validate()?;
        Ok(sm)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d.rows() != self.e.rows() {
            return Err(shape_err("subspace bases", self.d.rows(), self.e.rows()));
        }
        let m = self.d.rows();
        if self.d.cols() > m || self.e.cols() > m {
            return Err(Error::InvalidArgument(format!(
                "subspace dimensions ({}, {}) exceed signal length {m}",
                self.d.cols(),
                self.e.cols()
            )));
        }
        if !self.d.is_finite() || !self.e.is_finite() {
            return Err(Error::InvalidArgument("subspace bases must be finite".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.d.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn d1(&self) -> usize {
        self.d.cols()
    }

    pub fn d2(&self) -> usize {
        self.e.cols()
    }
}

/// Rank-one ensemble with `a_m = conj((F D)[m, :])` and `b_m = (F E)[m, :]`.
pub fn build_structured_ensemble(sm: &SubspaceModel) -> Result<Ensemble> {
    sm.validate()?;
    let f = dft_matrix(sm.len())?;
    // columns of D* F* are the conjugated rows of F D; columns of E^T F^T are rows of F E
    let a = f.matmul(&sm.d).adjoint();
    let b = f.matmul(&sm.e).transpose();
    Ensemble::from_factors(EnsembleKind::Structured, a, b)
}

/// `|F (D u conv E conj(v))|^2`, computed by convolving in time.
pub fn forward_conv_magnitudes(sm: &SubspaceModel, u: &[C64], v: &[C64]) -> Result<Vec<f64>> {
    sm.validate()?;
    if u.len() != sm.d1() {
        return Err(shape_err("forward_conv_magnitudes u", sm.d1(), u.len()));
    }
    if v.len() != sm.d2() {
        return Err(shape_err("forward_conv_magnitudes v", sm.d2(), v.len()));
    }
    let x = sm.d.mul_vec(u);
    let vbar: Vec<C64> = v.iter().map(|z| z.conj()).collect();
    let h = sm.e.mul_vec(&vbar);
    let conv = circular_convolve(&x, &h)?;
    let f = dft_matrix(sm.len())?;
    Ok(f.mul_vec(&conv).iter().map(|z| z.norm_sqr()).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecoveredSignals {
    /// Leading left singular vector of the estimate; `None` when the estimate is zero.
    pub u: Option<Vec<C64>>,
    pub v: Option<Vec<C64>>,
    pub sigma: f64,
    pub report: SolveReport,
}

/// Spectral anchor, convex solve, then the leading singular triple of the
/// estimate with the phase of `u` normalized (and `v` rotated to match).
pub fn recover_signals(sm: &SubspaceModel, y: &Observations, cfg: &SolverConfig) -> Result<RecoveredSignals> {
    let ens = build_structured_ensemble(sm)?;
    if y.len() != ens.num_measurements() {
        return Err(shape_err("recover_signals observations", ens.num_measurements(), y.len()));
    }
    if y.y.iter().all(|&v| v == 0.0) {
        let xhat = DenseMatrix::zeros(sm.d1(), sm.d2());
        return Ok(RecoveredSignals {
            u: None,
            v: None,
            sigma: 0.0,
            report: SolveReport {
                xhat,
                iterations: 0,
                objective: 0.0,
                hinge: 0.0,
                status: SolveStatus::Converged,
                best_feasible_objective: Some(0.0),
                trace: Vec::new(),
            },
        });
    }
    let anchor = anchor_rank1(&ens, &y.y)?;
    let report = solve(&ens, &y.y, &anchor, cfg)?;
    let dec = svd(&report.xhat)?;
    let sigma = dec.sigma.first().copied().unwrap_or(0.0);
    if sigma == 0.0 {
        return Ok(RecoveredSignals {
            u: None,
            v: None,
            sigma,
            report,
        });
    }
    let mut u = dec.u.col(0).to_vec();
    let phase = normalize_phase(&mut u);
    let v: Vec<C64> = dec.v.col(0).iter().map(|z| z * phase).collect();
    Ok(RecoveredSignals {
        u: Some(u),
        v: Some(v),
        sigma,
        report,
    })
}
