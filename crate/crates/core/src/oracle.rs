//! Monte Carlo checks of closed-form Gaussian expectations and bounds.
//!
//! Tensors are flat with multi-index `(i1, i2, i3, i4) -> i1 + d i2 + d^2 i3 + d^3 i4`.

use serde::{Deserialize, Serialize};

use crate::anchor::{upsilon_col_from_row, upsilon_rank1};
use crate::error::{shape_err, Error, Result};
use crate::model::{complex_normal, measure, real_normal, sample_gaussian_iid, sample_rank1_complex, RngSpec};
use crate::numlin::{hermitian_eigen, spectral_norm, subspace_sin, DenseMatrix, C64, ORTHONORMAL_TOL};

/// `fourth_moment_check` at `d = 2`, `N = 5e5`.
pub const FOURTH_MOMENT_TOL: f64 = 0.05;
/// `quad_form_check` at `d = 4`, `N = 2e5`.
pub const QUAD_FORM_TOL: f64 = 0.05;
/// `octa_moment_check` at `d = 2`, `N = 1e6`. The `g_1^8` entry alone has a
/// standard error near 1.42 at this `N` and a heavy right tail; across 30
/// seeds the worst error was 5.7.
pub const OCTA_MOMENT_TOL: f64 = 8.0;
/// Relative tolerances for `E|g|^2, E|g|^4, E|g|^6, E|g|^8` at `N = 1e6`.
pub const COMPLEX_MOMENT_REL_TOL: [f64; 4] = [0.01, 0.03, 0.05, 0.10];
/// Relative Frobenius tolerance for the partial-trace expectations.
pub const UPSILON_REL_TOL: f64 = 0.05;
/// Standard errors of slack in the product-tail comparison.
pub const TAIL_SLACK_SE: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub name: String,
    pub shape: Vec<usize>,
    pub analytic: Vec<f64>,
    pub empirical: Vec<f64>,
    pub max_abs_err: f64,
    /// `||empirical - analytic||_F / ||analytic||_F`.
    pub rel_fro_err: f64,
    pub samples: usize,
    pub seed: RngSpec,
}

impl MomentReport {
    fn new(name: &str, shape: Vec<usize>, analytic: Vec<f64>, empirical: Vec<f64>, samples: usize, seed: RngSpec) -> Self {
        debug_assert_eq!(analytic.len(), empirical.len());
        let mut max_abs_err: f64 = 0.0;
        let mut diff2 = 0.0;
        for (a, e) in analytic.iter().zip(&empirical) {
            max_abs_err = max_abs_err.max((a - e).abs());
            diff2 += (a - e) * (a - e);
        }
        let norm = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        let rel_fro_err = if norm > 0.0 { diff2.sqrt() / norm } else { diff2.sqrt() };
        Self {
            name: name.to_string(),
            shape,
            analytic,
            empirical,
            max_abs_err,
            rel_fro_err,
            samples,
            seed,
        }
    }
}

fn delta(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        0.0
    }
}

fn tensor_index(d: usize, i: usize, j: usize, k: usize, l: usize) -> usize {
    i + d * (j + d * (k + d * l))
}

/// `E[g_i g_j g_k g_l] = d_ij d_kl + d_ik d_jl + d_il d_jk`.
pub fn fourth_moment_tensor(d: usize) -> Vec<f64> {
    let mut t = vec![0.0; d.pow(4)];
    for l in 0..d {
        for k in 0..d {
            for j in 0..d {
                for i in 0..d {
                    t[tensor_index(d, i, j, k, l)] =
                        delta(i, j) * delta(k, l) + delta(i, k) * delta(j, l) + delta(i, l) * delta(j, k);
                }
            }
        }
    }
    t
}

/// `E[(x^T g)^4 g_i g_j g_k g_l]` for unit `x`: 24 x_i x_j x_k x_l, plus 12 times
/// the six `x x delta` patterns, plus 3 times the three `delta delta` patterns.
pub fn octa_moment_tensor(x: &[f64]) -> Vec<f64> {
    let d = x.len();
    let mut t = vec![0.0; d.pow(4)];
    for l in 0..d {
        for k in 0..d {
            for j in 0..d {
                for i in 0..d {
                    let all = x[i] * x[j] * x[k] * x[l];
                    let mixed = x[i] * x[j] * delta(k, l)
                        + x[i] * x[k] * delta(j, l)
                        + x[i] * x[l] * delta(j, k)
                        + x[j] * x[k] * delta(i, l)
                        + x[j] * x[l] * delta(i, k)
                        + x[k] * x[l] * delta(i, j);
                    let ident = delta(i, j) * delta(k, l) + delta(i, k) * delta(j, l) + delta(i, l) * delta(j, k);
                    t[tensor_index(d, i, j, k, l)] = 24.0 * all + 12.0 * mixed + 3.0 * ident;
                }
            }
        }
    }
    t
}

/// Adds `w * g (x) g (x) g (x) g` into `acc`.
fn accumulate_tensor(acc: &mut [f64], g: &[f64], w: f64) {
    let d = g.len();
    let mut idx = 0;
    for &gl in g {
        let a = w * gl;
        for &gk in g {
            let b = a * gk;
            for &gj in g {
                let c = b * gj;
                for &gi in g {
                    acc[idx] += c * gi;
                    idx += 1;
                }
            }
        }
    }
    debug_assert_eq!(idx, d.pow(4));
}

/// Empirical `E[g (x) g (x) g (x) g]` for `g ~ N(0, I_d)` against the closed form.
pub fn fourth_moment_check(d: usize, n: usize, rng: RngSpec) -> Result<MomentReport> {
    if d == 0 || d > 6 {
        return Err(Error::InvalidArgument(format!("fourth_moment_check needs 1 <= d <= 6, got {d}")));
    }
    if n < 10_000 {
        return Err(Error::InvalidArgument(format!("fourth_moment_check needs N >= 1e4, got {n}")));
    }
    let mut r = rng.rng();
    let mut acc = vec![0.0; d.pow(4)];
    let mut g = vec![0.0; d];
    for _ in 0..n {
        g.iter_mut().for_each(|v| *v = real_normal(&mut r));
        accumulate_tensor(&mut acc, &g, 1.0);
    }
    acc.iter_mut().for_each(|v| *v /= n as f64);
    Ok(MomentReport::new("fourth_moment", vec![d; 4], fourth_moment_tensor(d), acc, n, rng))
}

/// Empirical `E[(x^T g)(g^T y) g g^T]` against `(x^T y) I + x y^T + y x^T`.
pub fn quad_form_check(x: &[f64], y: &[f64], n: usize, rng: RngSpec) -> Result<MomentReport> {
    let d = x.len();
    if y.len() != d {
        return Err(shape_err("quad_form_check", d, y.len()));
    }
    if d == 0 || d > 64 {
        return Err(Error::InvalidArgument(format!("quad_form_check needs 1 <= d <= 64, got {d}")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("quad_form_check needs N >= 1".into()));
    }
    let xy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let mut analytic = vec![0.0; d * d];
    for j in 0..d {
        for i in 0..d {
            analytic[i + d * j] = xy * delta(i, j) + x[i] * y[j] + y[i] * x[j];
        }
    }
    let mut r = rng.rng();
    let mut acc = vec![0.0; d * d];
    let mut g = vec![0.0; d];
    for _ in 0..n {
        g.iter_mut().for_each(|v| *v = real_normal(&mut r));
        let w: f64 = g.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() * g.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
        for j in 0..d {
            let wj = w * g[j];
            for i in 0..d {
                acc[i + d * j] += wj * g[i];
            }
        }
    }
    acc.iter_mut().for_each(|v| *v /= n as f64);
    Ok(MomentReport::new("quad_form", vec![d, d], analytic, acc, n, rng))
}

/// Empirical `E[(x^T g)^4 g (x) g (x) g (x) g]` for a unit vector `x`.
pub fn octa_moment_check(x: &[f64], n: usize, rng: RngSpec) -> Result<MomentReport> {
    let d = x.len();
    if d == 0 || d > 4 {
        return Err(Error::InvalidArgument(format!("octa_moment_check needs 1 <= d <= 4, got {d}")));
    }
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!("octa_moment_check needs a unit vector, |x| = {norm}")));
    }
    if n < 100_000 {
        return Err(Error::InvalidArgument(format!("octa_moment_check needs N >= 1e5, got {n}")));
    }
    let mut r = rng.rng();
    let mut acc = vec![0.0; d.pow(4)];
    let mut g = vec![0.0; d];
    for _ in 0..n {
        g.iter_mut().for_each(|v| *v = real_normal(&mut r));
        let p: f64 = g.iter().zip(x).map(|(a, b)| a * b).sum();
        let p2 = p * p;
        accumulate_tensor(&mut acc, &g, p2 * p2);
    }
    acc.iter_mut().for_each(|v| *v /= n as f64);
    Ok(MomentReport::new("octa_moment", vec![d; 4], octa_moment_tensor(x), acc, n, rng))
}

/// Empirical `E|g|^{2k}`, `k = 1..4`, for `g ~ CN(0, 1)` against `k!`.
pub fn complex_moment_check(n: usize, rng: RngSpec) -> Result<MomentReport> {
    if n == 0 {
        return Err(Error::InvalidArgument("complex_moment_check needs N >= 1".into()));
    }
    let mut r = rng.rng();
    let mut acc = [0.0; 4];
    for _ in 0..n {
        let s = complex_normal(&mut r).norm_sqr();
        let mut p = s;
        for a in acc.iter_mut() {
            *a += p;
            p *= s;
        }
    }
    let empirical = acc.iter().map(|a| a / n as f64).collect();
    Ok(MomentReport::new("complex_moments", vec![4], vec![1.0, 2.0, 6.0, 24.0], empirical, n, rng))
}

/// Whether every complex moment is within its relative tolerance.
pub fn complex_moments_within(report: &MomentReport, rel_tol: &[f64; 4]) -> bool {
    report
        .analytic
        .iter()
        .zip(&report.empirical)
        .zip(rel_tol)
        .all(|((a, e), t)| (a - e).abs() <= t * a)
}

fn flatten_real(m: &DenseMatrix) -> Vec<f64> {
    m.as_slice().iter().map(|z| z.re).collect()
}

fn flatten_complex(m: &DenseMatrix) -> Vec<f64> {
    m.as_slice().iter().flat_map(|z| [z.re, z.im]).collect()
}

/// Partial-trace matrix of a fresh rank-one ensemble, measuring `sigma u v*`
/// with constant noise `xi_mean`, against `sigma^2 u u* + (sigma^2 + xi_mean) I`.
/// Entries are stored as interleaved `(re, im)` pairs.
pub fn expected_upsilon_rank1_check(
    u: &[C64],
    v: &[C64],
    sigma: f64,
    xi_mean: f64,
    m: usize,
    rng: RngSpec,
) -> Result<MomentReport> {
    for (name, w) in [("u", u), ("v", v)] {
        let n = crate::numlin::norm2(w);
        if (n - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!("{name} must be a unit vector, |{name}| = {n}")));
        }
    }
    let d1 = u.len();
    let ens = sample_rank1_complex(d1, v.len(), m, rng.derive("ensemble", 0))?;
    let x = DenseMatrix::outer(u, v).scale_real(sigma);
    let noise = vec![xi_mean; m];
    let y = measure(&ens, &x, Some(&noise))?.y;
    let (ups, _) = upsilon_rank1(&ens, &y)?;
    let analytic = &DenseMatrix::outer(u, u).scale_real(sigma * sigma)
        + &DenseMatrix::identity(d1).scale_real(sigma * sigma + xi_mean);
    Ok(MomentReport::new(
        "expected_upsilon_rank1",
        vec![d1, d1, 2],
        flatten_complex(&analytic),
        flatten_complex(&ups),
        m,
        rng,
    ))
}

/// Partial-trace matrix of a fresh real Gaussian ensemble compressed by `Vhat`
/// against `2 X Vhat Vhat^T X^T + r (||X||_F^2 + xi_mean) I`.
pub fn expected_upsilon_rankr_check(
    xsharp: &DenseMatrix,
    vhat: &DenseMatrix,
    xi_mean: f64,
    m: usize,
    rng: RngSpec,
) -> Result<MomentReport> {
    if !xsharp.is_real() || !vhat.is_real() {
        return Err(Error::InvalidArgument("Gaussian partial-trace check is real-valued".into()));
    }
    if vhat.rows() != xsharp.cols() {
        return Err(shape_err("Vhat rows", xsharp.cols(), vhat.rows()));
    }
    let res = vhat.orthonormality_residual();
    if res > ORTHONORMAL_TOL {
        return Err(Error::NotOrthonormal("Vhat", res));
    }
    let (d1, d2) = xsharp.shape();
    let r = vhat.cols() as f64;
    let ens = sample_gaussian_iid(d1, d2, m, rng.derive("ensemble", 0))?;
    let noise = vec![xi_mean; m];
    let y = measure(&ens, xsharp, Some(&noise))?.y;
    let ups = upsilon_col_from_row(&ens, &y, vhat)?;
    let xv = xsharp.matmul(vhat);
    let analytic = &xv.matmul(&xv.adjoint()).scale_real(2.0)
        + &DenseMatrix::identity(d1).scale_real(r * (xsharp.fro_norm_sqr() + xi_mean));
    Ok(MomentReport::new(
        "expected_upsilon_rankr",
        vec![d1, d1],
        flatten_real(&analytic),
        flatten_real(&ups),
        m,
        rng,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub rho: f64,
    pub t: f64,
    pub empirical: f64,
    pub std_err: f64,
    pub bound: f64,
    pub passed: bool,
    pub samples: usize,
}

/// `(2/pi) acos(sqrt(3 - rho)/2) exp(-2t/(1 + rho))`.
pub fn gauss_product_tail_bound(rho: f64, t: f64) -> f64 {
    2.0 / std::f64::consts::PI * ((3.0 - rho).sqrt() / 2.0).acos() * (-2.0 * t / (1.0 + rho)).exp()
}

/// Empirical `P(g1 g2 > t)` for unit-variance Gaussians with correlation `rho`,
/// compared to the lower bound with [`TAIL_SLACK_SE`] standard errors of slack.
pub fn gauss_product_tail_check(rho: f64, t: f64, n: usize, rng: RngSpec) -> Result<TailReport> {
    if !(rho > -1.0 && rho <= 1.0) {
        return Err(Error::InvalidArgument(format!("rho must lie in (-1, 1], got {rho}")));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("t must be positive, got {t}")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("tail check needs N >= 1".into()));
    }
    let mut r = rng.rng();
    let c = (1.0 - rho * rho).max(0.0).sqrt();
    let mut hits = 0usize;
    for _ in 0..n {
        let g1 = real_normal(&mut r);
        let g2 = rho * g1 + c * real_normal(&mut r);
        if g1 * g2 > t {
            hits += 1;
        }
    }
    let p = hits as f64 / n as f64;
    let bound = gauss_product_tail_bound(rho, t);
    // with no hits the sample estimate of the error is 0; fall back to the
    // binomial error at the bound itself
    let std_err = (p * (1.0 - p) / n as f64).sqrt().max((bound * (1.0 - bound) / n as f64).sqrt());
    Ok(TailReport {
        rho,
        t,
        empirical: p,
        std_err,
        bound,
        passed: p >= bound - TAIL_SLACK_SE * std_err,
        samples: n,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DavisKahanReport {
    pub gap: f64,
    pub delta_norm: f64,
    pub sin_angle: f64,
    pub bound: f64,
    /// `||Delta|| <= gap / 5`, the premise of the bound.
    pub applicable: bool,
    /// `gap <= 0`: nothing to check.
    pub skipped: bool,
    /// The implication holds (vacuously when not applicable).
    pub holds: bool,
}

/// Checks `||Delta|| <= gap/5  =>  sin angle <= 4 ||Delta|| / gap` between
/// the leading `r`-dimensional eigenspaces of `A` and `A + Delta`.
pub fn davis_kahan_check(a: &DenseMatrix, delta_mat: &DenseMatrix, r: usize) -> Result<DavisKahanReport> {
    if a.shape() != delta_mat.shape() || a.rows() != a.cols() {
        return Err(shape_err("davis_kahan_check", format!("{:?}", a.shape()), format!("{:?}", delta_mat.shape())));
    }
    let n = a.rows();
    if r == 0 || r >= n {
        return Err(Error::InvalidArgument(format!("need 1 <= r < {n}, got {r}")));
    }
    let ea = hermitian_eigen(a)?;
    let gap = ea.values[r - 1] - ea.values[r];
    let delta_norm = spectral_norm(delta_mat)?;
    if gap <= 0.0 {
        return Ok(DavisKahanReport {
            gap,
            delta_norm,
            sin_angle: f64::NAN,
            bound: f64::INFINITY,
            applicable: false,
            skipped: true,
            holds: true,
        });
    }
    let eb = hermitian_eigen(&(a + delta_mat))?;
    let sin_angle = subspace_sin(&ea.vectors.leading_cols(r), &eb.vectors.leading_cols(r))?;
    let bound = 4.0 * delta_norm / gap;
    let applicable = delta_norm <= gap / 5.0;
    Ok(DavisKahanReport {
        gap,
        delta_norm,
        sin_angle,
        bound,
        applicable,
        skipped: false,
        holds: !applicable || sin_angle <= bound + 1e-12,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    /// The statistic compared against `tolerance`.
    pub metric: f64,
    pub tolerance: f64,
}

fn outcome(name: &str, metric: f64, tolerance: f64) -> CheckOutcome {
    CheckOutcome {
        name: name.to_string(),
        passed: metric <= tolerance,
        metric,
        tolerance,
    }
}

/// The default moment battery: fourth, quadratic-form, eighth and complex
/// moments, both partial-trace expectations, the product tail and a
/// randomized Davis-Kahan sweep.
pub fn default_battery(seed: u64) -> Result<Vec<CheckOutcome>> {
    let base = RngSpec::new(seed, 0);
    let mut out = Vec::new();

    let r = fourth_moment_check(2, 500_000, base.derive("fourth", 0))?;
    out.push(outcome("fourth_moment", r.max_abs_err, FOURTH_MOMENT_TOL));

    let (x, y) = ([0.5, 0.5, 0.5, 0.5], [0.5, -0.5, 0.5, -0.5]);
    let r = quad_form_check(&x, &y, 200_000, base.derive("quad", 0))?;
    out.push(outcome("quad_form", r.max_abs_err, QUAD_FORM_TOL));

    let r = octa_moment_check(&[1.0, 0.0], 1_000_000, base.derive("octa", 0))?;
    out.push(outcome("octa_moment", r.max_abs_err, OCTA_MOMENT_TOL));

    let r = complex_moment_check(1_000_000, base.derive("complex", 0))?;
    let worst = r
        .analytic
        .iter()
        .zip(&r.empirical)
        .zip(COMPLEX_MOMENT_REL_TOL)
        .map(|((a, e), t)| (a - e).abs() / (a * t))
        .fold(0.0, f64::max);
    out.push(outcome("complex_moments", worst, 1.0));

    let mut g = base.derive("upsilon_truth", 0).rng();
    let u = crate::model::random_unit_complex(8, &mut g);
    let v = crate::model::random_unit_complex(8, &mut g);
    let r = expected_upsilon_rank1_check(&u, &v, 1.0, 0.0, 200_000, base.derive("upsilon_rank1", 0))?;
    out.push(outcome("expected_upsilon_rank1", r.rel_fro_err, UPSILON_REL_TOL));

    let (xs, vh) = random_rank_r_real(6, 6, 2, &mut g)?;
    let r = expected_upsilon_rankr_check(&xs, &vh, 0.0, 200_000, base.derive("upsilon_rankr", 0))?;
    out.push(outcome("expected_upsilon_rankr", r.rel_fro_err, UPSILON_REL_TOL));

    let t = gauss_product_tail_check(0.5, 0.5, 1_000_000, base.derive("tail", 0))?;
    out.push(CheckOutcome {
        name: "gauss_product_tail".into(),
        passed: t.passed,
        metric: t.bound - t.empirical,
        tolerance: TAIL_SLACK_SE * t.std_err,
    });

    let mut failures = 0usize;
    for i in 0..100 {
        let (a, d) = random_davis_kahan_instance(6, 2, 6.0, base.derive("davis_kahan", i));
        if !davis_kahan_check(&a, &d, 2)?.holds {
            failures += 1;
        }
    }
    out.push(outcome("davis_kahan", failures as f64, 0.0));
    Ok(out)
}

/// Real rank-`r` matrix with singular values in `[1, 1.5]` and its right factor.
pub fn random_rank_r_real<R: rand::Rng + ?Sized>(
    d1: usize,
    d2: usize,
    r: usize,
    rng: &mut R,
) -> Result<(DenseMatrix, DenseMatrix)> {
    let a = DenseMatrix::from_fn(d1, r, |_, _| C64::new(real_normal(rng), 0.0));
    let b = DenseMatrix::from_fn(d2, r, |_, _| C64::new(real_normal(rng), 0.0));
    let ua = crate::numlin::svd(&a)?.u.leading_cols(r);
    let vb = crate::numlin::svd(&b)?.u.leading_cols(r);
    let sig: Vec<f64> = (0..r).map(|i| 1.0 + 0.5 * i as f64 / r as f64).collect();
    let x = ua.matmul(&DenseMatrix::diag(&sig)).matmul(&vb.adjoint());
    // strip round-off imaginary parts so the matrix is flagged real
    let x = DenseMatrix::from_fn(d1, d2, |i, j| C64::new(x[(i, j)].re, 0.0));
    let vb = DenseMatrix::from_fn(d2, r, |i, j| C64::new(vb[(i, j)].re, 0.0));
    Ok((x, vb))
}

/// Random PSD `A` with a positive gap after index `r` and a Hermitian
/// perturbation of spectral norm `gap / ratio`.
pub fn random_davis_kahan_instance(n: usize, r: usize, ratio: f64, rng: RngSpec) -> (DenseMatrix, DenseMatrix) {
    let mut g = rng.rng();
    let q = crate::numlin::svd(&DenseMatrix::from_fn(n, n, |_, _| complex_normal(&mut g)))
        .expect("finite gaussian matrix")
        .u;
    let vals: Vec<f64> = (0..n)
        .map(|i| if i < r { 2.0 + rand::Rng::random::<f64>(&mut g) } else { rand::Rng::random::<f64>(&mut g) })
        .collect();
    let a = q.matmul(&DenseMatrix::diag(&vals)).matmul(&q.adjoint()).hermitian_part();
    let mut sorted = vals.clone();
    sorted.sort_by(|x, y| y.total_cmp(x));
    let gap = sorted[r - 1] - sorted[r];
    let h = DenseMatrix::from_fn(n, n, |_, _| complex_normal(&mut g)).hermitian_part();
    let hn = spectral_norm(&h).expect("finite");
    let d = h.scale_real(gap / ratio / hn);
    (a, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// `E[prod of 2k standard normals]` by summing over all perfect matchings
    /// (Isserlis); `cov(a, b)` gives the pairwise covariance.
    fn isserlis(slots: &[usize], cov: &dyn Fn(usize, usize) -> f64) -> f64 {
        if slots.is_empty() {
            return 1.0;
        }
        let first = slots[0];
        let rest = &slots[1..];
        let mut total = 0.0;
        for (k, &s) in rest.iter().enumerate() {
            let c = cov(first, s);
            if c == 0.0 {
                continue;
            }
            let remaining: Vec<usize> = rest.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, &v)| v).collect();
            total += c * isserlis(&remaining, cov);
        }
        total
    }

    /// Oracle for the eighth-moment tensor: slots 0..4 are `x^T g`, 4..8 are
    /// `g_i, g_j, g_k, g_l`.
    fn octa_by_matchings(x: &[f64]) -> Vec<f64> {
        let d = x.len();
        let mut t = vec![0.0; d.pow(4)];
        for l in 0..d {
            for k in 0..d {
                for j in 0..d {
                    for i in 0..d {
                        let idx = [i, j, k, l];
                        let cov = |a: usize, b: usize| -> f64 {
                            match (a < 4, b < 4) {
                                (true, true) => x.iter().map(|v| v * v).sum(),
                                (true, false) => x[idx[b - 4]],
                                (false, true) => x[idx[a - 4]],
                                (false, false) => delta(idx[a - 4], idx[b - 4]),
                            }
                        };
                        t[tensor_index(d, i, j, k, l)] = isserlis(&[0, 1, 2, 3, 4, 5, 6, 7], &cov);
                    }
                }
            }
        }
        t
    }

    #[test]
    fn closed_forms_match_matchings() {
        let d = 3;
        let four = fourth_moment_tensor(d);
        for l in 0..d {
            for k in 0..d {
                for j in 0..d {
                    for i in 0..d {
                        let idx = [i, j, k, l];
                        let want = isserlis(&[0, 1, 2, 3], &|a, b| delta(idx[a], idx[b]));
                        assert_eq!(four[tensor_index(d, i, j, k, l)], want);
                    }
                }
            }
        }
        for x in [vec![1.0], vec![0.6, 0.8], vec![0.0, 1.0, 0.0], vec![0.5, -0.5, 0.5, 0.5]] {
            let a = octa_moment_tensor(&x);
            let b = octa_by_matchings(&x);
            for (p, q) in a.iter().zip(&b) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn known_tensor_entries() {
        assert_eq!(fourth_moment_tensor(1), vec![3.0]);
        assert_eq!(fourth_moment_tensor(2)[tensor_index(2, 0, 0, 1, 1)], 1.0);
        assert_eq!(octa_moment_tensor(&[1.0]), vec![105.0]);
        let t = octa_moment_tensor(&[1.0, 0.0]);
        assert_eq!(t[tensor_index(2, 1, 1, 1, 1)], 9.0);
        assert_eq!(t[tensor_index(2, 0, 0, 1, 1)], 15.0);
    }

    #[test]
    fn analytic_tensors_are_symmetric() {
        let x = [0.6, 0.0, 0.8];
        let t = octa_moment_tensor(&x);
        let d = 3;
        for l in 0..d {
            for k in 0..d {
                for j in 0..d {
                    for i in 0..d {
                        let v = t[tensor_index(d, i, j, k, l)];
                        assert_eq!(v, t[tensor_index(d, j, i, k, l)]);
                        assert_eq!(v, t[tensor_index(d, k, j, i, l)]);
                        assert_eq!(v, t[tensor_index(d, l, j, k, i)]);
                    }
                }
            }
        }
    }

    #[test]
    fn quad_form_analytic_examples() {
        let r = quad_form_check(&[1.0, 0.0], &[1.0, 0.0], 10, RngSpec::new(0, 0)).unwrap();
        assert_eq!(r.analytic, vec![3.0, 0.0, 0.0, 1.0]);
        let r = quad_form_check(&[1.0, 0.0], &[0.0, 1.0], 10, RngSpec::new(0, 0)).unwrap();
        assert_eq!(r.analytic, vec![0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn upsilon_analytic_examples() {
        let e1 = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
        let r = expected_upsilon_rank1_check(&e1, &e1, 1.0, 1.0, 10, RngSpec::new(0, 0)).unwrap();
        // u u* + 2 I, interleaved re/im, column-major
        assert_eq!(r.analytic, vec![3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0]);
        let r = expected_upsilon_rank1_check(&e1, &e1, 0.0, 0.5, 10, RngSpec::new(0, 0)).unwrap();
        assert_eq!(r.analytic, vec![0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.0]);

        let x = DenseMatrix::from_real_rows(2, 2, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        let v = DenseMatrix::from_real_rows(2, 1, &[1.0, 0.0]).unwrap();
        let r = expected_upsilon_rankr_check(&x, &v, 0.0, 10, RngSpec::new(0, 0)).unwrap();
        assert_eq!(r.analytic, vec![3.0, 0.0, 0.0, 1.0]);
        let vperp = DenseMatrix::from_real_rows(2, 1, &[0.0, 1.0]).unwrap();
        let r = expected_upsilon_rankr_check(&x, &vperp, 0.25, 10, RngSpec::new(0, 0)).unwrap();
        assert_eq!(r.analytic, vec![1.25, 0.0, 0.0, 1.25]);
    }

    #[test]
    fn tail_bound_examples() {
        assert!((gauss_product_tail_bound(1.0, 1.0) - 0.5 * (-1.0f64).exp()).abs() < 1e-12);
        // exact P(|g| > 1) = erfc(1/sqrt 2) = 0.31731
        assert!(0.3173 >= gauss_product_tail_bound(1.0, 1.0));
        assert!((gauss_product_tail_bound(0.0, 1e-12) - 1.0 / 3.0).abs() < 1e-9);
        assert!(gauss_product_tail_check(-1.0, 1.0, 10, RngSpec::new(0, 0)).is_err());
        assert!(gauss_product_tail_check(0.5, 0.0, 10, RngSpec::new(0, 0)).is_err());
    }

    #[test]
    fn davis_kahan_examples() {
        let a = DenseMatrix::from_real_rows(2, 2, &[2.0, 0.0, 0.0, 1.0]).unwrap();
        let zero = DenseMatrix::zeros(2, 2);
        let r = davis_kahan_check(&a, &zero, 1).unwrap();
        assert_eq!(r.sin_angle, 0.0);
        assert!(r.holds && r.applicable);
        let d = DenseMatrix::from_real_rows(2, 2, &[0.0, 0.1, 0.1, 0.0]).unwrap();
        let r = davis_kahan_check(&a, &d, 1).unwrap();
        assert!((r.bound - 0.4).abs() < 1e-12);
        assert!(r.applicable && r.holds);
        // exact angle: tan(2 theta) = 0.2
        assert!((r.sin_angle - (0.5 * 0.2f64.atan()).sin()).abs() < 1e-10);
        let r = davis_kahan_check(&DenseMatrix::identity(3), &zero_like(3), 1).unwrap();
        assert!(r.skipped);
    }

    fn zero_like(n: usize) -> DenseMatrix {
        DenseMatrix::zeros(n, n)
    }

    #[test]
    fn input_guards() {
        let s = RngSpec::new(0, 0);
        assert!(fourth_moment_check(7, 10_000, s).is_err());
        assert!(fourth_moment_check(2, 100, s).is_err());
        assert!(octa_moment_check(&[0.5, 0.5], 100_000, s).is_err());
        assert!(octa_moment_check(&[1.0, 0.0], 10, s).is_err());
        assert!(quad_form_check(&[1.0], &[1.0, 0.0], 10, s).is_err());
    }

    #[test]
    fn checks_are_deterministic() {
        let s = RngSpec::new(5, 2);
        assert_eq!(fourth_moment_check(2, 10_000, s).unwrap(), fourth_moment_check(2, 10_000, s).unwrap());
        assert_eq!(complex_moment_check(1000, s).unwrap(), complex_moment_check(1000, s).unwrap());
    }

    #[test]
    fn errors_shrink_like_inverse_sqrt_n() {
        // averaged over seeds so a single lucky draw cannot decide the ratio
        let mean_err = |n: usize| -> f64 {
            (0..8)
                .map(|s| fourth_moment_check(2, n, RngSpec::new(40 + s, 0)).unwrap().rel_fro_err)
                .sum::<f64>()
                / 8.0
        };
        let ratio = mean_err(20_000) / mean_err(80_000);
        assert!((1.0..=4.0).contains(&ratio), "ratio {ratio}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn davis_kahan_holds_when_applicable(seed in 0u64..10_000, ratio in 5.0f64..50.0) {
            let (a, d) = random_davis_kahan_instance(5, 2, ratio, RngSpec::new(seed, 0));
            let r = davis_kahan_check(&a, &d, 2).unwrap();
            prop_assert!(r.applicable);
            prop_assert!(r.holds, "{:?}", r);
        }
    }
}
