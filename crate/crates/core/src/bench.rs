//! Experiment harness: phase-transition grids, noise and initialization
//! sweeps, CSV and SVG output.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anchor::{anchor_oracle, anchor_quality, anchor_rank1, Anchor};
use crate::error::{Error, Result};
use crate::metrics::phase_dist;
use crate::model::{
    eta_from_noise, measure, random_unit_complex, sample_rank1_complex, stream_hash, Ensemble, NoiseSpec, RngSpec,
};
use crate::numlin::DenseMatrix;
use crate::solver::{solve, SolveStatus, SolverConfig, SolverMode};

pub const CSV_HEADER: &str = "M,d,trials,successes,success_rate,median_relerr,runtime_ms";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    /// Anchor from the truth's own factors.
    OracleAnchor,
    /// Spectral anchor from the observations.
    DataAnchor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseGridSpec {
    pub m_values: Vec<usize>,
    /// Square problems, `d1 = d2 = d`.
    pub d_values: Vec<usize>,
    pub trials: usize,
    #[serde(default = "default_success_tol")]
    pub success_tol: f64,
    #[serde(default = "default_pipeline")]
    pub pipeline: Pipeline,
    pub base_seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Fill the `runtime_ms` column; off by default so reruns are byte-identical.
    #[serde(default)]
    pub record_timing: bool,
}

fn default_success_tol() -> f64 {
    1e-4
}

fn default_pipeline() -> Pipeline {
    Pipeline::OracleAnchor
}

impl PhaseGridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m_values.is_empty() || self.d_values.is_empty() {
            return Err(Error::InvalidArgument("grid needs at least one M and one d".into()));
        }
        if self.m_values.iter().chain(&self.d_values).any(|&v| v == 0) {
            return Err(Error::InvalidArgument("grid sizes must be >= 1".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be >= 1".into()));
        }
        if !(self.success_tol > 0.0) {
            return Err(Error::InvalidArgument("success_tol must be positive".into()));
        }
        self.solver.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub m: usize,
    pub d: usize,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub median_relerr: f64,
    pub runtime_ms: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub m_values: Vec<usize>,
    pub d_values: Vec<usize>,
    /// Row-major in `(M, d)`: `cells[i * d_values.len() + j]` is `(m_values[i], d_values[j])`.
    pub cells: Vec<CellResult>,
}

impl GridResult {
    pub fn cell(&self, m: usize, d: usize) -> Option<&CellResult> {
        let i = self.m_values.iter().position(|&v| v == m)?;
        let j = self.d_values.iter().position(|&v| v == d)?;
        self.cells.get(i * self.d_values.len() + j)
    }
}

/// Stream for one `(M, d, trial)` of a run.
pub fn trial_seed(base_seed: u64, m: usize, d: usize, trial: usize) -> RngSpec {
    RngSpec::new(base_seed, stream_hash(&[m as u64, d as u64, trial as u64]))
}

/// Fresh rank-one complex ensemble and a unit-Frobenius `u v*`.
pub fn rank1_instance(d: usize, m: usize, seed: RngSpec) -> Result<(Ensemble, DenseMatrix)> {
    let ens = sample_rank1_complex(d, d, m, seed.derive("ensemble", 0))?;
    let mut r = seed.derive("truth", 0).rng();
    let u = random_unit_complex(d, &mut r);
    let v = random_unit_complex(d, &mut r);
    Ok((ens, DenseMatrix::outer(&u, &v)))
}

fn make_anchor(pipeline: Pipeline, ens: &Ensemble, y: &[f64], x: &DenseMatrix) -> Result<Anchor> {
    match pipeline {
        Pipeline::OracleAnchor => anchor_oracle(x),
        Pipeline::DataAnchor => anchor_rank1(ens, y),
    }
}

/// Relative phase distance of one noiseless trial; errors count as failure.
fn run_trial(spec: &PhaseGridSpec, m: usize, d: usize, trial: usize) -> f64 {
    let attempt = || -> Result<f64> {
        let (ens, x) = rank1_instance(d, m, trial_seed(spec.base_seed, m, d, trial))?;
        let y = measure(&ens, &x, None)?.y;
        let anchor = make_anchor(spec.pipeline, &ens, &y, &x)?;
        let rep = solve(&ens, &y, &anchor, &spec.solver)?;
        Ok(phase_dist(&rep.xhat, &x)? / x.fro_norm())
    };
    attempt().unwrap_or(f64::INFINITY)
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

/// Monte Carlo success rates over the `(M, d)` grid. Trials run on
/// `workers` threads; results are reduced in `(M, d, trial)` order.
pub fn run_phase_transition(spec: &PhaseGridSpec, workers: usize) -> Result<GridResult> {
    spec.validate()?;
    let mut seen = HashSet::new();
    for &m in &spec.m_values {
        for &d in &spec.d_values {
            for t in 0..spec.trials {
                if !seen.insert(trial_seed(spec.base_seed, m, d, t)) {
                    return Err(Error::InvalidArgument(format!("seed collision at M={m}, d={d}, trial={t}")));
                }
            }
        }
    }
    let pool = thread_pool(workers)?;
    let mut cells = Vec::with_capacity(spec.m_values.len() * spec.d_values.len());
    for &m in &spec.m_values {
        for &d in &spec.d_values {
            let start = Instant::now();
            let errs: Vec<f64> = pool.install(|| {
                (0..spec.trials)
                    .into_par_iter()
                    .map(|t| run_trial(spec, m, d, t))
                    .collect()
            });
            let successes = errs.iter().filter(|&&e| e <= spec.success_tol).count();
            cells.push(CellResult {
                m,
                d,
                trials: spec.trials,
                successes,
                success_rate: successes as f64 / spec.trials as f64,
                median_relerr: median(&errs),
                runtime_ms: spec.record_timing.then(|| start.elapsed().as_millis() as u64),
            });
        }
    }
    Ok(GridResult {
        m_values: spec.m_values.clone(),
        d_values: spec.d_values.clone(),
        cells,
    })
}

fn fmt_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:e}")
    } else {
        "inf".into()
    }
}

pub fn grid_to_csv(result: &GridResult) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for c in &result.cells {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            c.m,
            c.d,
            c.trials,
            c.successes,
            c.success_rate,
            fmt_float(c.median_relerr),
            c.runtime_ms.map(|t| t.to_string()).unwrap_or_default()
        );
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionFit {
    pub c: f64,
    pub alpha: f64,
    /// `(M, d)` points where the success rate crosses one half.
    pub crossings: Vec<(f64, f64)>,
    /// Logarithm used in `d = c M / log^alpha M`.
    pub log_base: String,
}

impl TransitionFit {
    pub fn boundary_d(&self, m: f64) -> f64 {
        self.c * m / m.ln().powf(self.alpha)
    }
}

/// Least-squares fit of the half-success boundary to `d = c M / ln^alpha M`.
///
/// For each `M` the crossing `d` is interpolated linearly between the last
/// grid `d` with rate at least one half and the next one below; the fit is
/// `ln d - ln M = ln c - alpha ln ln M` over those crossings.
pub fn fit_transition_curve(result: &GridResult) -> Result<TransitionFit> {
    let nd = result.d_values.len();
    let mut crossings = Vec::new();
    for (i, &m) in result.m_values.iter().enumerate() {
        let row = &result.cells[i * nd..(i + 1) * nd];
        let mut order: Vec<&CellResult> = row.iter().collect();
        order.sort_by_key(|c| c.d);
        for w in order.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a.success_rate >= 0.5 && b.success_rate < 0.5 {
                let frac = (a.success_rate - 0.5) / (a.success_rate - b.success_rate);
                let d = a.d as f64 + frac * (b.d as f64 - a.d as f64);
                crossings.push((m as f64, d));
                break;
            }
        }
    }
    let distinct: HashSet<u64> = crossings.iter().map(|(m, _)| m.to_bits()).collect();
    if distinct.len() < 2 || crossings.iter().any(|(m, _)| *m <= std::f64::consts::E) {
        return Err(Error::InvalidArgument("grid does not straddle transition".into()));
    }
    let pts: Vec<(f64, f64)> = crossings
        .iter()
        .map(|&(m, d)| (m.ln().ln(), d.ln() - m.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("grid does not straddle transition".into()));
    }
    let slope = sxy / sxx;
    let alpha = -slope;
    let c = (my - slope * mx).exp();
    Ok(TransitionFit {
        c,
        alpha,
        crossings,
        log_base: "natural".into(),
    })
}

/// Fraction of cells whose majority outcome agrees with the side of the
/// fitted boundary they lie on.
pub fn classification_accuracy(result: &GridResult, fit: &TransitionFit) -> f64 {
    let agree = result
        .cells
        .iter()
        .filter(|c| (c.success_rate >= 0.5) == ((c.d as f64) <= fit.boundary_d(c.m as f64)))
        .count();
    agree as f64 / result.cells.len().max(1) as f64
}

/// Adjacent-cell pairs where the success rate moves the wrong way by more
/// than one binomial standard deviation `sqrt(p (1 - p) / trials)` at the
/// pair's mean rate: rates should not drop as `M` grows or rise as `d` grows.
pub fn monotonicity_violations(result: &GridResult) -> Vec<String> {
    let nd = result.d_values.len();
    let nm = result.m_values.len();
    let at = |i: usize, j: usize| &result.cells[i * nd + j];
    let slack = |a: &CellResult, b: &CellResult| {
        let p = 0.5 * (a.success_rate + b.success_rate);
        (p * (1.0 - p) / a.trials as f64).sqrt()
    };
    let mut out = Vec::new();
    for i in 0..nm {
        for j in 0..nd {
            let c = at(i, j);
            if i + 1 < nm {
                let n = at(i + 1, j);
                if n.m > c.m && n.success_rate + slack(c, n) < c.success_rate {
                    out.push(format!("d={} drops from M={} to M={}", c.d, c.m, n.m));
                }
            }
            if j + 1 < nd {
                let n = at(i, j + 1);
                if n.d > c.d && n.success_rate > c.success_rate + slack(c, n) {
                    out.push(format!("M={} rises from d={} to d={}", c.m, c.d, n.d));
                }
            }
        }
    }
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Gray-scale heat map (white = all success, black = all failure) with `d`
/// on the horizontal axis and `M` increasing upward; the fitted boundary is
/// drawn when given.
pub fn heatmap_svg(result: &GridResult, fit: Option<&TransitionFit>) -> Result<String> {
    let nm = result.m_values.len();
    let nd = result.d_values.len();
    if nm == 0 || nd == 0 || result.cells.len() != nm * nd {
        return Err(Error::InvalidArgument("heat map needs a nonempty, complete grid".into()));
    }
    let cell = 40.0;
    let (left, top) = (70.0, 20.0);
    let width = left + cell * nd as f64 + 20.0;
    let height = top + cell * nm as f64 + 50.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    for (i, &m) in result.m_values.iter().enumerate() {
        let y = top + cell * (nm - 1 - i) as f64;
        for j in 0..nd {
            let c = &result.cells[i * nd + j];
            let level = (c.success_rate.clamp(0.0, 1.0) * 255.0).round() as u8;
            let x = left + cell * j as f64;
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="rgb({level},{level},{level})" stroke="gray" stroke-width="0.5"><title>M={m} d={} rate={}</title></rect>"#,
                c.d, c.success_rate
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{m}</text>"#,
            left - 6.0,
            y + cell / 2.0 + 4.0
        );
    }
    for (j, &d) in result.d_values.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" text-anchor="middle">{d}</text>"#,
            left + cell * (j as f64 + 0.5),
            top + cell * nm as f64 + 15.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{}</text>"#,
        left + cell * nd as f64 / 2.0,
        height - 8.0,
        xml_escape("d (matrix size)")
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {})">M</text>"#,
        top + cell * nm as f64 / 2.0,
        top + cell * nm as f64 / 2.0
    );
    if let Some(fit) = fit {
        // piecewise-linear in grid coordinates between the listed M rows
        let to_x = |d: f64| -> Option<f64> {
            let ds = &result.d_values;
            if ds.len() == 1 {
                return Some(left + cell / 2.0);
            }
            let k = ds.windows(2).position(|w| d >= w[0] as f64 && d <= w[1] as f64)?;
            let t = (d - ds[k] as f64) / (ds[k + 1] - ds[k]) as f64;
            Some(left + cell * (k as f64 + 0.5 + t))
        };
        let pts: Vec<String> = result
            .m_values
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| {
                let x = to_x(fit.boundary_d(m as f64))?;
                Some(format!("{x:.2},{:.2}", top + cell * (nm as f64 - 0.5 - i as f64)))
            })
            .collect();
        if pts.len() >= 2 {
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="red" stroke-width="2"/>"#,
                pts.join(" ")
            );
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_heatmap_svg(result: &GridResult, fit: Option<&TransitionFit>, path: &Path) -> Result<()> {
    std::fs::write(path, heatmap_svg(result, fit)?)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSweepSpec {
    pub d: usize,
    pub m: usize,
    /// Standard deviations of Gaussian noise, one row per level.
    pub noise_levels: Vec<f64>,
    pub trials: usize,
    pub base_seed: u64,
    #[serde(default = "default_pipeline")]
    pub pipeline: Pipeline,
    #[serde(default)]
    pub solver: SolverConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub level: f64,
    pub mean_abs_noise: f64,
    pub median_relerr: f64,
    pub max_relerr: f64,
    /// Every trial ended within its hinge budget.
    pub all_feasible: bool,
}

/// Noisy recovery with the hinge budget `eta = mean((-xi)_+)`. The same
/// instances (ensemble, truth, noise direction) are reused at every level.
pub fn run_noise_sweep(spec: &NoiseSweepSpec, workers: usize) -> Result<Vec<NoiseRow>> {
    if spec.trials == 0 || spec.noise_levels.is_empty() {
        return Err(Error::InvalidArgument("noise sweep needs trials and levels".into()));
    }
    if spec.noise_levels.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
        return Err(Error::InvalidArgument("noise levels must be finite and >= 0".into()));
    }
    let base = SolverConfig {
        mode: SolverMode::HingePenalty,
        ..spec.solver.clone()
    };
    base.validate()?;
    let pool = thread_pool(workers)?;
    let mut rows = Vec::new();
    for &level in &spec.noise_levels {
        let per_trial: Vec<Result<(f64, f64, bool)>> = pool.install(|| {
            (0..spec.trials)
                .into_par_iter()
                .map(|t| {
                    let seed = trial_seed(spec.base_seed, spec.m, spec.d, t);
                    let (ens, x) = rank1_instance(spec.d, spec.m, seed)?;
                    let xi = NoiseSpec::Gaussian { sigma: level }.generate(spec.m, seed.derive("noise", 0))?;
                    let obs = measure(&ens, &x, Some(&xi))?;
                    let anchor = match spec.pipeline {
                        Pipeline::OracleAnchor => anchor_oracle(&x)?,
                        Pipeline::DataAnchor => anchor_rank1(&ens, &obs.y)?,
                    };
                    let cfg = SolverConfig {
                        eta: eta_from_noise(&xi, 0.0),
                        ..base.clone()
                    };
                    let rep = solve(&ens, &obs.y, &anchor, &cfg)?;
                    let err = phase_dist(&rep.xhat, &x)? / x.fro_norm();
                    let mean_abs = xi.iter().map(|v| v.abs()).sum::<f64>() / xi.len() as f64;
                    let feasible = rep.status != SolveStatus::Infeasible
                        && rep.hinge <= cfg.eta + cfg.tol_feas * (1.0 + obs.mean_y().abs());
                    Ok((err, mean_abs, feasible))
                })
                .collect()
        });
        let per_trial: Vec<(f64, f64, bool)> = per_trial.into_iter().collect::<Result<_>>()?;
        let errs: Vec<f64> = per_trial.iter().map(|p| p.0).collect();
        rows.push(NoiseRow {
            level,
            mean_abs_noise: per_trial.iter().map(|p| p.1).sum::<f64>() / per_trial.len() as f64,
            median_relerr: median(&errs),
            max_relerr: errs.iter().cloned().fold(0.0, f64::max),
            all_feasible: per_trial.iter().all(|p| p.2),
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitRow {
    pub m: usize,
    pub median_quality: f64,
    pub qualities: Vec<f64>,
}

/// Anchor quality of the rank-one spectral anchor versus `M`.
pub fn run_init_accuracy(d: usize, m_values: &[usize], trials: usize, base_seed: u64) -> Result<Vec<InitRow>> {
    if trials == 0 || m_values.is_empty() || d == 0 {
        return Err(Error::InvalidArgument("init sweep needs d, M values and trials".into()));
    }
    m_values
        .iter()
        .map(|&m| {
            let qualities = (0..trials)
                .map(|t| {
                    let (ens, x) = rank1_instance(d, m, trial_seed(base_seed, m, d, t))?;
                    let y = measure(&ens, &x, None)?.y;
                    anchor_quality(&anchor_rank1(&ens, &y)?, &x)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(InitRow {
                m,
                median_quality: median(&qualities),
                qualities,
            })
        })
        .collect()
}
