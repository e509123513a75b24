//! Regularized anchored regression.
//!
//! Solves
//!
//! ```text
//!   minimize   -Re<X0, X> + lambda ||X||_*
//!   subject to |<Phi_m, X>|^2 <= y_m                      (DiskProjection)
//!          or  (1/M) sum_m (|<Phi_m, X>|^2 - y_m)_+ <= eta (HingePenalty)
//! ```
//!
//! with a primal-dual hybrid gradient iteration on `f(X) + g(A X)`:
//! `f` is the linear term plus the nuclear norm (prox = shifted singular
//! value thresholding) and `g` is the indicator of the measurement-space
//! feasible set (prox via Moreau's identity and an exact projection).

use serde::{Deserialize, Serialize};

use crate::anchor::Anchor;
use crate::error::{shape_err, Error, Result};
use crate::model::{Ensemble, RngSpec};
use crate::numlin::{nuclear_norm, shrink, svd_warm, DenseMatrix, C64};

/// Iterations the relative-change test must hold for in a row.
pub const CONVERGENCE_WINDOW: usize = 10;

/// Multiplier-growth cap when the feasible set is empty.
const BISECTION_STEPS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    /// Per-measurement disks `|z_m| <= sqrt(y_m)`.
    DiskProjection,
    /// Average-hinge budget `(1/M) sum (|z_m|^2 - y_m)_+ <= eta`.
    HingePenalty,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub lambda: f64,
    pub eta: f64,
    pub mode: SolverMode,
    pub max_iter: usize,
    pub tol_rel_change: f64,
    pub tol_feas: f64,
    /// Margin on the estimated operator norm in the step-size rule.
    pub step_safety: f64,
    /// Primal-to-dual step ratio `tau / sigma`; `None` picks `sqrt(M)`.
    pub step_ratio: Option<f64>,
    pub opnorm_iters: usize,
    /// Keep the best feasible objective seen at every iteration.
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 0.7,
            eta: 0.0,
            mode: SolverMode::DiskProjection,
            max_iter: 20_000,
            tol_rel_change: 1e-7,
            tol_feas: 1e-8,
            step_safety: 1.05,
            step_ratio: None,
            opnorm_iters: 30,
            record_trace: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be >= 0, got {}", self.eta));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be >= 1".into());
        }
        if !(self.tol_rel_change > 0.0) || !(self.tol_feas >= 0.0) {
            return bad("tolerances must be positive".into());
        }
        if !(self.step_safety >= 1.0) {
            return bad(format!("step_safety must be >= 1, got {}", self.step_safety));
        }
        if let Some(r) = self.step_ratio {
            if !(r > 0.0 && r.is_finite()) {
                return bad(format!("step_ratio must be positive, got {r}"));
            }
        }
        if self.opnorm_iters == 0 {
            return bad("opnorm_iters must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    Infeasible,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub xhat: DenseMatrix,
    pub iterations: usize,
    pub objective: f64,
    pub hinge: f64,
    pub status: SolveStatus,
    /// Best objective over iterates within the feasibility tolerance.
    pub best_feasible_objective: Option<f64>,
    /// Best-so-far feasible objective per iteration (`record_trace` only).
    pub trace: Vec<f64>,
}

/// Radial projection onto the disk of the given radius.
pub fn disk_project(z: C64, radius: f64) -> C64 {
    let r = z.norm();
    if r <= radius {
        z
    } else {
        z * (radius / r)
    }
}

/// `-Re<X0, X> + lambda ||X||_*`.
pub fn objective(x: &DenseMatrix, x0: &DenseMatrix, lambda: f64) -> Result<f64> {
    if !x.same_shape(x0) {
        return Err(shape_err("objective", format!("{:?}", x0.shape()), format!("{:?}", x.shape())));
    }
    Ok(-x0.inner(x).re + lambda * nuclear_norm(x)?)
}

fn hinge_of(z: &[C64], y: &[f64]) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    z.iter()
        .zip(y)
        .map(|(zm, ym)| (zm.norm_sqr() - ym).max(0.0))
        .sum::<f64>()
        / y.len() as f64
}

/// `(1/M) sum_m (|<Phi_m, X>|^2 - y_m)_+`.
pub fn hinge_residual(ens: &Ensemble, y: &[f64], x: &DenseMatrix) -> Result<f64> {
    if y.len() != ens.num_measurements() {
        return Err(shape_err("hinge_residual", ens.num_measurements(), y.len()));
    }
    Ok(hinge_of(&ens.forward(x)?, y))
}

/// `lambda = 0.9 - delta` for an anchor of quality `delta`.
pub fn default_lambda(delta_estimate: f64) -> Result<f64> {
    if !(0.0..0.9).contains(&delta_estimate) {
        return Err(Error::InvalidArgument(format!(
            "anchor quality estimate must lie in [0, 0.9), got {delta_estimate}"
        )));
    }
    Ok(0.9 - delta_estimate)
}

/// Feasible set in measurement space.
enum Constraint<'a> {
    Disks(Vec<f64>),
    Hinge { y: &'a [f64], budget: f64 },
}

impl Constraint<'_> {
    fn project(&self, w: &mut [C64]) {
        match self {
            Constraint::Disks(radii) => {
                for (wm, &r) in w.iter_mut().zip(radii) {
                    *wm = disk_project(*wm, r);
                }
            }
            Constraint::Hinge { y, budget } => project_hinge_ball(w, y, *budget),
        }
    }
}

/// Euclidean projection onto `{w : sum_m (|w_m|^2 - y_m)_+ <= budget}`.
///
/// The KKT conditions shrink each violating coordinate radially to
/// `max(sqrt(y_m^+), |w_m| / (1 + 2 mu))`; the multiplier `mu` is found by
/// bisection on the (monotone) budget equation. Requires
/// `sum (-y_m)_+ <= budget`.
fn project_hinge_ball(w: &mut [C64], y: &[f64], budget: f64) {
    let excess = |mu: f64, w: &[C64]| -> f64 {
        w.iter()
            .zip(y)
            .map(|(wm, &ym)| {
                let a = wm.norm();
                let floor = ym.max(0.0).sqrt();
                let r = if a <= floor { a } else { floor.max(a / (1.0 + 2.0 * mu)) };
                (r * r - ym).max(0.0)
            })
            .sum()
    };
    if excess(0.0, w) <= budget {
        return;
    }
    let floor_excess: f64 = y.iter().map(|&ym| (-ym).max(0.0)).sum();
    let mu = if budget <= floor_excess {
        f64::INFINITY
    } else {
        let mut hi = 1.0;
        while excess(hi, w) > budget && hi < 1e300 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if excess(mid, w) > budget {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };
    for (wm, &ym) in w.iter_mut().zip(y) {
        let a = wm.norm();
        let floor = ym.max(0.0).sqrt();
        if a <= floor {
            continue;
        }
        let r = if mu.is_infinite() { floor } else { floor.max(a / (1.0 + 2.0 * mu)) };
        *wm *= r / a;
    }
}

fn rel_change(new: &DenseMatrix, old: &DenseMatrix) -> f64 {
    let num = (new - old).fro_norm();
    let den = new.fro_norm().max(old.fro_norm());
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Solves the anchored regression program from the anchor `X0`.
pub fn solve(ens: &Ensemble, y: &[f64], anchor: &Anchor, cfg: &SolverConfig) -> Result<SolveReport> {
    solve_from(ens, y, &anchor.x0, cfg)
}

/// As [`solve`] with an arbitrary anchor matrix.
pub fn solve_from(ens: &Ensemble, y: &[f64], x0: &DenseMatrix, cfg: &SolverConfig) -> Result<SolveReport> {
    cfg.validate()?;
    let m = ens.num_measurements();
    if y.len() != m {
        return Err(shape_err("solve observations", m, y.len()));
    }
    if x0.shape() != (ens.d1(), ens.d2()) {
        return Err(shape_err(
            "solve anchor",
            format!("{}x{}", ens.d1(), ens.d2()),
            format!("{:?}", x0.shape()),
        ));
    }
    if y.iter().any(|v| !v.is_finite()) || !x0.is_finite() {
        return Err(Error::InvalidArgument("observations and anchor must be finite".into()));
    }

    let mean_y = y.iter().sum::<f64>() / m as f64;
    let feas_tol = cfg.eta + cfg.tol_feas * (1.0 + mean_y.abs());
    let constraint = match cfg.mode {
        SolverMode::DiskProjection => {
            if let Some(bad) = y.iter().position(|&v| v < 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "disk constraints need y >= 0 (y[{bad}] = {})",
                    y[bad]
                )));
            }
            Constraint::Disks(y.iter().map(|v| v.sqrt()).collect())
        }
        SolverMode::HingePenalty => {
            let floor = y.iter().map(|&v| (-v).max(0.0)).sum::<f64>() / m as f64;
            if floor > cfg.eta + cfg.tol_feas * (1.0 + mean_y.abs()) {
                return Ok(SolveReport {
                    xhat: DenseMatrix::zeros(ens.d1(), ens.d2()),
                    iterations: 0,
                    objective: 0.0,
                    hinge: floor,
                    status: SolveStatus::Infeasible,
                    best_feasible_objective: None,
                    trace: Vec::new(),
                });
            }
            Constraint::Hinge {
                y,
                budget: cfg.eta * m as f64,
            }
        }
    };

    let opnorm_seed = RngSpec::new(0x6f70_6e6f_726d, m as u64);
    let lhat = ens.opnorm_estimate(cfg.opnorm_iters, opnorm_seed)? * cfg.step_safety;
    if lhat == 0.0 {
        // A = 0: the constraint is vacuous; only the regularized linear term remains.
        return degenerate_zero_operator(ens, y, x0, cfg);
    }
    let ratio = cfg.step_ratio.unwrap_or((m as f64).sqrt());
    let tau = ratio.sqrt() / lhat;
    let sigma = 1.0 / (ratio.sqrt() * lhat);
    let thresh = tau * cfg.lambda;

    let mut x = x0.clone();
    let mut ax = ens.forward(&x)?;
    let mut ax_bar = ax.clone();
    let mut z = vec![C64::new(0.0, 0.0); m];
    let mut basis: Option<DenseMatrix> = None;
    let mut streak = 0;
    let mut best: Option<f64> = None;
    let mut trace = Vec::new();
    let mut status = SolveStatus::MaxIter;
    let mut iterations = 0;
    let mut last_obj = f64::NAN;
    let mut last_hinge = hinge_of(&ax, y);
    let mut w = vec![C64::new(0.0, 0.0); m];

    for it in 1..=cfg.max_iter {
        iterations = it;
        // dual step: z <- prox_{sigma g*}(z + sigma A xbar) = v - sigma P(v / sigma)
        for ((wm, zm), am) in w.iter_mut().zip(&z).zip(&ax_bar) {
            *wm = (zm + am * sigma) / sigma;
        }
        constraint.project(&mut w);
        for ((zm, am), pm) in z.iter_mut().zip(&ax_bar).zip(&w) {
            *zm = *zm + am * sigma - pm * sigma;
        }

        // primal step: X <- svt(X - tau A* z + tau X0, tau lambda)
        let mut v = ens.adjoint(&z)?;
        for ((vi, xi), x0i) in v
            .as_mut_slice()
            .iter_mut()
            .zip(x.as_slice())
            .zip(x0.as_slice())
        {
            *vi = xi - *vi * tau + x0i * tau;
        }
        let (dec, next_basis) = svd_warm(&v, basis.as_ref())?;
        basis = Some(next_basis);
        let (x_new, nuc) = shrink(&dec, thresh);
        if !x_new.is_finite() {
            break;
        }

        let ax_new = ens.forward(&x_new)?;
        for ((b, an), ao) in ax_bar.iter_mut().zip(&ax_new).zip(&ax) {
            *b = an * 2.0 - ao;
        }

        let change = rel_change(&x_new, &x);
        x = x_new;
        ax = ax_new;
        last_hinge = hinge_of(&ax, y);
        last_obj = -x0.inner(&x).re + cfg.lambda * nuc;
        let feasible = last_hinge <= feas_tol;
        if feasible {
            best = Some(best.map_or(last_obj, |b: f64| b.min(last_obj)));
        }
        if cfg.record_trace {
            trace.push(best.unwrap_or(f64::INFINITY));
        }

        streak = if change <= cfg.tol_rel_change { streak + 1 } else { 0 };
        if streak >= CONVERGENCE_WINDOW && feasible {
            status = SolveStatus::Converged;
            break;
        }
    }

    Ok(SolveReport {
        xhat: x,
        iterations,
        objective: last_obj,
        hinge: last_hinge,
        status,
        best_feasible_objective: best,
        trace,
    })
}

fn degenerate_zero_operator(
    ens: &Ensemble,
    y: &[f64],
    x0: &DenseMatrix,
    cfg: &SolverConfig,
) -> Result<SolveReport> {
    // min -Re<X0,X> + lambda |X|_* is 0 at X = 0 when |X0| <= lambda, unbounded otherwise.
    let bounded = crate::numlin::spectral_norm(x0)? <= cfg.lambda;
    let xhat = DenseMatrix::zeros(ens.d1(), ens.d2());
    Ok(SolveReport {
        hinge: hinge_residual(ens, y, &xhat)?,
        xhat,
        iterations: 0,
        objective: 0.0,
        status: if bounded { SolveStatus::Converged } else { SolveStatus::MaxIter },
        best_feasible_objective: bounded.then_some(0.0),
        trace: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchor::anchor_oracle;
    use crate::metrics::phase_dist;
    use crate::model::{measure, random_unit_complex, sample_rank1_complex};

    fn instance(d: usize, m: usize, seed: u64) -> (Ensemble, DenseMatrix, Vec<f64>) {
        let ens = sample_rank1_complex(d, d, m, RngSpec::new(seed, 0)).unwrap();
        let mut r = RngSpec::new(seed, 1).rng();
        let x = DenseMatrix::outer(&random_unit_complex(d, &mut r), &random_unit_complex(d, &mut r));
        let y = measure(&ens, &x, None).unwrap().y;
        (ens, x, y)
    }

    #[test]
    fn disk_project_examples() {
        assert_eq!(disk_project(C64::new(0.0, 0.0), 1.0), C64::new(0.0, 0.0));
        assert_eq!(disk_project(C64::new(3.0, 0.0), 1.0), C64::new(1.0, 0.0));
        let p = disk_project(C64::new(1.0, 1.0), 1.0);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((p - C64::new(h, h)).norm() < 1e-15);
        assert!((p.norm() - 1.0).abs() < 1e-15);
        assert_eq!(disk_project(C64::new(0.2, 0.1), 1.0), C64::new(0.2, 0.1));
    }

    #[test]
    fn objective_examples() {
        let u = [C64::new(0.6, 0.0), C64::new(0.0, 0.8)];
        let v = [C64::new(0.0, 1.0), C64::new(0.0, 0.0)];
        let x = DenseMatrix::outer(&u, &v);
        assert_eq!(objective(&DenseMatrix::zeros(2, 2), &x, 0.7).unwrap(), 0.0);
        assert!((objective(&x, &x, 0.7).unwrap() + 0.3).abs() < 1e-14);
        let mut r = RngSpec::new(1, 0).rng();
        for _ in 0..20 {
            let a = DenseMatrix::outer(&random_unit_complex(3, &mut r), &random_unit_complex(3, &mut r));
            let b = DenseMatrix::from_fn(3, 3, |_, _| crate::model::complex_normal(&mut r));
            let x0 = DenseMatrix::from_fn(3, 3, |_, _| crate::model::complex_normal(&mut r));
            let mid = (&a + &b).scale_real(0.5);
            let lhs = objective(&mid, &x0, 0.7).unwrap();
            let rhs = 0.5 * (objective(&a, &x0, 0.7).unwrap() + objective(&b, &x0, 0.7).unwrap());
            assert!(lhs <= rhs + 1e-10);
        }
    }

    #[test]
    fn hinge_examples() {
        let (ens, x, y) = instance(4, 30, 2);
        assert_eq!(hinge_residual(&ens, &y, &x).unwrap(), 0.0);
        let shifted: Vec<f64> = y.iter().map(|v| v - 1.0).collect();
        assert!((hinge_residual(&ens, &shifted, &x).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(hinge_residual(&ens, &y, &DenseMatrix::zeros(4, 4)).unwrap(), 0.0);
        assert!(hinge_residual(&ens, &y[..3], &x).is_err());
    }

    #[test]
    fn default_lambda_rule() {
        assert!((default_lambda(0.2).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(default_lambda(0.0).unwrap(), 0.9);
        assert!(default_lambda(0.9).is_err());
        assert!(default_lambda(-0.1).is_err());
    }

    #[test]
    fn hinge_projection_meets_budget() {
        let mut r = RngSpec::new(3, 0).rng();
        let y: Vec<f64> = (0..50).map(|i| (i % 7) as f64 * 0.2 - 0.1).collect();
        let w0: Vec<C64> = (0..50).map(|_| crate::model::complex_normal(&mut r) * 2.0).collect();
        let floor: f64 = y.iter().map(|v| (-v).max(0.0)).sum();
        for budget in [floor, floor + 0.5, floor + 5.0, 1e6] {
            let mut w = w0.clone();
            project_hinge_ball(&mut w, &y, budget);
            let ex: f64 = w.iter().zip(&y).map(|(a, b)| (a.norm_sqr() - b).max(0.0)).sum();
            assert!(ex <= budget * (1.0 + 1e-9) + 1e-12, "budget {budget}: {ex}");
            // radial: phases preserved, magnitudes never grow
            for (a, b) in w.iter().zip(&w0) {
                assert!(a.norm() <= b.norm() + 1e-15);
                if a.norm() > 0.0 {
                    assert!((a / a.norm() - b / b.norm()).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn hinge_ball_with_zero_budget_is_the_disks() {
        let mut r = RngSpec::new(4, 0).rng();
        let y: Vec<f64> = (0..20).map(|i| 0.1 * i as f64).collect();
        let w0: Vec<C64> = (0..20).map(|_| crate::model::complex_normal(&mut r)).collect();
        let mut a = w0.clone();
        project_hinge_ball(&mut a, &y, 0.0);
        for ((p, q), ym) in a.iter().zip(&w0).zip(&y) {
            assert!((p - disk_project(*q, ym.sqrt())).norm() < 1e-15);
        }
    }

    #[test]
    fn recovers_with_oracle_anchor() {
        let (ens, x, y) = instance(6, 120, 5);
        let anchor = anchor_oracle(&x).unwrap();
        let rep = solve(&ens, &y, &anchor, &SolverConfig::default()).unwrap();
        assert_eq!(rep.status, SolveStatus::Converged, "{} iters", rep.iterations);
        let err = phase_dist(&rep.xhat, &x).unwrap();
        assert!(err <= 1e-4, "err {err}");
    }

    #[test]
    fn solve_rejects_bad_inputs() {
        let (ens, x, mut y) = instance(3, 20, 6);
        let anchor = anchor_oracle(&x).unwrap();
        let cfg = SolverConfig::default();
        assert!(solve(&ens, &y[..5], &anchor, &cfg).is_err());
        y[0] = -1.0;
        assert!(solve(&ens, &y, &anchor, &cfg).is_err());
        let hinge = SolverConfig {
            mode: SolverMode::HingePenalty,
            ..SolverConfig::default()
        };
        let rep = solve(&ens, &y, &anchor, &hinge).unwrap();
        assert_eq!(rep.status, SolveStatus::Infeasible);
        let bad = SolverConfig {
            lambda: -1.0,
            ..SolverConfig::default()
        };
        assert!(solve(&ens, &y, &anchor, &bad).is_err());
    }

    #[test]
    fn determinism_and_trace_monotone() {
        let (ens, x, y) = instance(5, 90, 7);
        let anchor = anchor_oracle(&x).unwrap();
        let cfg = SolverConfig {
            record_trace: true,
            max_iter: 400,
            ..SolverConfig::default()
        };
        let a = solve(&ens, &y, &anchor, &cfg).unwrap();
        let b = solve(&ens, &y, &anchor, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.trace.windows(2).all(|w| w[1] <= w[0]));
    }
}
