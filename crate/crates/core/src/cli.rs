//! Command-line front end. Every command reads one JSON config, writes its
//! artifacts under `--out`, and stamps each JSON artifact with a manifest.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 numeric failure
//! (solver did not converge, infeasible budget, failed check).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::anchor::{
    anchor_col_from_row, anchor_naive_vectorized, anchor_oracle, anchor_psd, anchor_quality, anchor_rank1, Anchor,
    AnchorMethod,
};
use crate::bench::{
    classification_accuracy, heatmap_svg, fit_transition_curve, grid_to_csv, run_init_accuracy,
    run_noise_sweep, run_phase_transition, NoiseSweepSpec, PhaseGridSpec, Pipeline,
};
use crate::deconv::{build_structured_ensemble, forward_conv_magnitudes, recover_signals, SubspaceModel};
use crate::error::{Error, Result};
use crate::io::{read_json, write_json, AnchorFile, EnsembleFile, MatrixFile, ObservationsFile};
use crate::metrics::{phase_dist, vec_sin_angle};
use crate::model::{
    complex_normal, measure, random_unit_complex, sample_gaussian_iid, sample_rank1_complex, EnsembleKind,
    NoiseSpec, Observations, RngSpec,
};
use crate::numlin::{DenseMatrix, C64};
use crate::oracle::default_battery;
use crate::solver::{solve, SolveStatus, SolverConfig};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "lrpr", version, about = "Low-rank phase retrieval by anchored regression")]
struct Cli {
    /// JSON config for the command.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads for the experiment commands.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Suppress the summary on stdout.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Sample an ensemble, a ground truth and its observations.
    Simulate,
    /// Build an anchor from an ensemble and observations.
    Anchor,
    /// Solve the anchored regression program.
    Solve,
    /// Blind deconvolution from Fourier magnitudes on a random subspace model.
    Deconv,
    /// Phase-transition grid: CSV, SVG heat map and fitted boundary.
    BenchPt,
    /// Recovery error versus noise level.
    NoiseSweep,
    /// Anchor quality versus number of measurements.
    InitSweep,
    /// Monte Carlo moment and bound checks.
    VerifyMoments,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    /// SHA-256 of the config file bytes, lowercase hex.
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    manifest: &'a Manifest,
    #[serde(flatten)]
    body: &'a T,
}

/// Fields every config carries.
#[derive(Deserialize)]
struct Header {
    config_version: u32,
    seed: u64,
}

enum Failure {
    Usage(String),
    Numeric(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonConvergence { .. } | Error::NotHermitian(_) => Failure::Numeric(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

type CmdResult = std::result::Result<Vec<String>, Failure>;

struct Ctx {
    out: PathBuf,
    base: PathBuf,
    workers: usize,
    manifest: Manifest,
    raw: serde_json::Value,
}

impl Ctx {
    fn config<T: DeserializeOwned>(&self) -> std::result::Result<T, Failure> {
        serde_json::from_value(self.raw.clone()).map_err(|e| Failure::Usage(format!("config: {e}")))
    }

    /// Paths in configs are relative to the config file.
    fn input(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    fn write<T: Serialize>(&self, name: &str, body: &T) -> Result<String> {
        let path = self.out.join(name);
        write_json(
            &path,
            &Stamped {
                manifest: &self.manifest,
                body,
            },
        )?;
        Ok(path.display().to_string())
    }

    fn write_text(&self, name: &str, text: &str) -> Result<String> {
        let path = self.out.join(name);
        std::fs::write(&path, text)?;
        Ok(path.display().to_string())
    }
}

fn read_stamped<T: DeserializeOwned>(path: &Path) -> Result<T> {
    // artifacts carry a manifest alongside the payload; strip it before decoding
    let mut v: serde_json::Value = read_json(path)?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("manifest");
    }
    Ok(serde_json::from_value(v)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let quiet = cli.quiet;
    match dispatch(cli) {
        Ok(lines) => {
            if !quiet {
                for l in lines {
                    println!("{l}");
                }
            }
            0
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("numeric failure: {msg}");
            2
        }
    }
}

fn dispatch(cli: Cli) -> CmdResult {
    let config_path = cli
        .config
        .ok_or_else(|| Failure::Usage("--config PATH is required".into()))?;
    let bytes = std::fs::read(&config_path)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", config_path.display())))?;
    let raw: serde_json::Value =
        serde_json::from_slice(&bytes).map_err(|e| Failure::Usage(format!("config is not JSON: {e}")))?;
    let header: Header = serde_json::from_value(raw.clone()).map_err(|e| Failure::Usage(format!("config: {e}")))?;
    if header.config_version != CONFIG_VERSION {
        return Err(Failure::Usage(format!(
            "config_version: expected {CONFIG_VERSION}, got {}",
            header.config_version
        )));
    }
    if cli.workers == 0 {
        return Err(Failure::Usage("--workers must be >= 1".into()));
    }
    std::fs::create_dir_all(&cli.out).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", cli.out.display())))?;
    let ctx = Ctx {
        out: cli.out,
        base: config_path.parent().map(Path::to_path_buf).unwrap_or_default(),
        workers: cli.workers,
        manifest: Manifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: sha256_hex(&bytes),
            seed: header.seed,
        },
        raw,
    };
    match cli.command {
        Command::Simulate => cmd_simulate(&ctx),
        Command::Anchor => cmd_anchor(&ctx),
        Command::Solve => cmd_solve(&ctx),
        Command::Deconv => cmd_deconv(&ctx),
        Command::BenchPt => cmd_bench_pt(&ctx),
        Command::NoiseSweep => cmd_noise_sweep(&ctx),
        Command::InitSweep => cmd_init_sweep(&ctx),
        Command::VerifyMoments => cmd_verify_moments(&ctx),
    }
}

fn default_rank() -> usize {
    1
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateConfig {
    #[allow(dead_code)]
    config_version: u32,
    seed: u64,
    kind: EnsembleKind,
    d1: usize,
    d2: usize,
    #[serde(rename = "M")]
    m: usize,
    #[serde(default = "default_rank")]
    rank: usize,
    #[serde(default)]
    noise: NoiseSpec,
}

#[derive(Serialize)]
struct TruthFile {
    rank: usize,
    xsharp: MatrixFile,
}

#[derive(Deserialize)]
struct TruthIn {
    xsharp: MatrixFile,
}

fn cmd_simulate(ctx: &Ctx) -> CmdResult {
    let cfg: SimulateConfig = ctx.config()?;
    if cfg.m == 0 {
        return Err(Failure::Usage("M: must be >= 1".into()));
    }
    if cfg.d1 == 0 || cfg.d2 == 0 {
        return Err(Failure::Usage("d1, d2: must be >= 1".into()));
    }
    if cfg.rank == 0 || cfg.rank > cfg.d1.min(cfg.d2) {
        return Err(Failure::Usage(format!("rank: must lie in 1..={}", cfg.d1.min(cfg.d2))));
    }
    if cfg.kind.is_rank_one() && cfg.rank != 1 {
        return Err(Failure::Usage("rank: rank-one ensembles simulate rank-1 targets only".into()));
    }
    cfg.noise.validate().map_err(|e| Failure::Usage(format!("noise: {e}")))?;
    let root = RngSpec::new(cfg.seed, 0);
    let ens_seed = root.derive("ensemble", 0);
    let ens = match cfg.kind {
        EnsembleKind::GaussianIid => sample_gaussian_iid(cfg.d1, cfg.d2, cfg.m, ens_seed)?,
        EnsembleKind::RankOneComplex => sample_rank1_complex(cfg.d1, cfg.d2, cfg.m, ens_seed)?,
        EnsembleKind::Structured => {
            let mut r = ens_seed.rng();
            if cfg.d1 > cfg.m || cfg.d2 > cfg.m {
                return Err(Failure::Usage("d1, d2: structured ensembles need d1, d2 <= M".into()));
            }
            let d = DenseMatrix::from_fn(cfg.m, cfg.d1, |_, _| complex_normal(&mut r));
            let e = DenseMatrix::from_fn(cfg.m, cfg.d2, |_, _| complex_normal(&mut r));
            build_structured_ensemble(&SubspaceModel::new(d, e)?)?
        }
    };
    let mut tr = root.derive("truth", 0).rng();
    let x = if cfg.kind == EnsembleKind::GaussianIid {
        crate::oracle::random_rank_r_real(cfg.d1, cfg.d2, cfg.rank, &mut tr)?.0
    } else {
        DenseMatrix::outer(&random_unit_complex(cfg.d1, &mut tr), &random_unit_complex(cfg.d2, &mut tr))
    };
    let xi = cfg.noise.generate(cfg.m, root.derive("noise", 0))?;
    let obs = measure(&ens, &x, Some(&xi))?;
    Ok(vec![
        ctx.write("ensemble.json", &EnsembleFile::from_ensemble(&ens))?,
        ctx.write("obs.json", &ObservationsFile::from_observations(&obs))?,
        ctx.write(
            "truth.json",
            &TruthFile {
                rank: cfg.rank,
                xsharp: MatrixFile::from_matrix(&x),
            },
        )?,
    ])
}

fn load_problem(ctx: &Ctx, ensemble: &Path, observations: &Path) -> Result<(crate::model::Ensemble, Observations)> {
    let ens = read_stamped::<EnsembleFile>(&ctx.input(ensemble))?.to_ensemble()?;
    let obs = read_stamped::<ObservationsFile>(&ctx.input(observations))?.to_observations()?;
    if obs.len() != ens.num_measurements() {
        return Err(Error::InvalidArgument(format!(
            "observations: {} values for {} measurements",
            obs.len(),
            ens.num_measurements()
        )));
    }
    Ok((ens, obs))
}

fn load_truth(ctx: &Ctx, p: &Option<PathBuf>) -> Result<Option<DenseMatrix>> {
    p.as_ref()
        .map(|p| read_stamped::<TruthIn>(&ctx.input(p))?.xsharp.to_matrix())
        .transpose()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AnchorConfig {
    #[allow(dead_code)]
    config_version: u32,
    #[allow(dead_code)]
    seed: u64,
    ensemble: PathBuf,
    observations: PathBuf,
    method: AnchorMethod,
    #[serde(default = "default_rank")]
    rank: usize,
    #[serde(default)]
    truth: Option<PathBuf>,
    /// Rowspace estimate (`d2 x r` matrix file) for the Gaussian refinements.
    #[serde(default)]
    vhat: Option<PathBuf>,
}

fn cmd_anchor(ctx: &Ctx) -> CmdResult {
    let cfg: AnchorConfig = ctx.config()?;
    let (ens, obs) = load_problem(ctx, &cfg.ensemble, &cfg.observations)?;
    let truth = load_truth(ctx, &cfg.truth)?;
    let vhat = || -> std::result::Result<DenseMatrix, Failure> {
        let p = cfg
            .vhat
            .as_ref()
            .ok_or_else(|| Failure::Usage(format!("vhat: required by method {:?}", cfg.method)))?;
        Ok(read_stamped::<MatrixFile>(&ctx.input(p))?.to_matrix()?)
    };
    let anchor = match cfg.method {
        AnchorMethod::Rank1 => anchor_rank1(&ens, &obs.y)?,
        AnchorMethod::NaiveVectorized => anchor_naive_vectorized(&ens, &obs.y, cfg.rank)?,
        AnchorMethod::Oracle => {
            let x = truth
                .as_ref()
                .ok_or_else(|| Failure::Usage("truth: required by method Oracle".into()))?;
            anchor_oracle(x)?
        }
        AnchorMethod::RowToCol => {
            let v = vhat()?;
            let u0 = anchor_col_from_row(&ens, &obs.y, &v)?;
            Anchor::new(u0, v, AnchorMethod::RowToCol)?
        }
        AnchorMethod::Psd => anchor_psd(&ens, &obs.y, &vhat()?)?,
    };
    let quality = truth.as_ref().map(|x| anchor_quality(&anchor, x)).transpose()?;
    let mut lines = vec![ctx.write("anchor.json", &AnchorFile::from_anchor(&anchor, quality))?];
    if let Some(q) = quality {
        lines.push(format!("anchor quality {q:.6}"));
    }
    Ok(lines)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SolveConfigFile {
    #[allow(dead_code)]
    config_version: u32,
    #[allow(dead_code)]
    seed: u64,
    ensemble: PathBuf,
    observations: PathBuf,
    anchor: PathBuf,
    #[serde(default)]
    truth: Option<PathBuf>,
    #[serde(default)]
    solver: SolverConfig,
}

#[derive(Serialize)]
struct SolveOut {
    status: SolveStatus,
    iterations: usize,
    objective: f64,
    hinge: f64,
    best_feasible_objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    relative_error: Option<f64>,
    xhat: MatrixFile,
}

fn status_failure(status: SolveStatus) -> Option<Failure> {
    match status {
        SolveStatus::Converged => None,
        other => Some(Failure::Numeric(format!("solver status {other:?}"))),
    }
}

fn cmd_solve(ctx: &Ctx) -> CmdResult {
    let cfg: SolveConfigFile = ctx.config()?;
    let (ens, obs) = load_problem(ctx, &cfg.ensemble, &cfg.observations)?;
    let anchor = read_stamped::<AnchorFile>(&ctx.input(&cfg.anchor))?.to_anchor()?;
    let truth = load_truth(ctx, &cfg.truth)?;
    let rep = solve(&ens, &obs.y, &anchor, &cfg.solver)?;
    let relative_error = truth
        .as_ref()
        .map(|x| -> Result<f64> { Ok(phase_dist(&rep.xhat, x)? / x.fro_norm()) })
        .transpose()?;
    let out = SolveOut {
        status: rep.status,
        iterations: rep.iterations,
        objective: rep.objective,
        hinge: rep.hinge,
        best_feasible_objective: rep.best_feasible_objective,
        relative_error,
        xhat: MatrixFile::from_matrix(&rep.xhat),
    };
    let path = ctx.write("solve.json", &out)?;
    if let Some(f) = status_failure(rep.status) {
        return Err(f);
    }
    let mut lines = vec![path, format!("status {:?} after {} iterations", rep.status, rep.iterations)];
    if let Some(e) = relative_error {
        lines.push(format!("relative error {e:.3e}"));
    }
    Ok(lines)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DeconvConfig {
    #[allow(dead_code)]
    config_version: u32,
    seed: u64,
    #[serde(rename = "M")]
    m: usize,
    d1: usize,
    d2: usize,
    #[serde(default)]
    noise: NoiseSpec,
    #[serde(default)]
    solver: SolverConfig,
}

fn pairs(v: &[C64]) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

#[derive(Serialize)]
struct DeconvOut {
    status: SolveStatus,
    iterations: usize,
    sigma: f64,
    u_true: Vec<[f64; 2]>,
    v_true: Vec<[f64; 2]>,
    u_hat: Option<Vec<[f64; 2]>>,
    v_hat: Option<Vec<[f64; 2]>>,
    sin_angle_u: Option<f64>,
    sin_angle_v: Option<f64>,
}

fn cmd_deconv(ctx: &Ctx) -> CmdResult {
    let cfg: DeconvConfig = ctx.config()?;
    if cfg.m == 0 || cfg.d1 == 0 || cfg.d2 == 0 || cfg.d1 > cfg.m || cfg.d2 > cfg.m {
        return Err(Failure::Usage("M, d1, d2: need 1 <= d1, d2 <= M".into()));
    }
    cfg.noise.validate().map_err(|e| Failure::Usage(format!("noise: {e}")))?;
    let root = RngSpec::new(cfg.seed, 0);
    let mut r = root.derive("subspaces", 0).rng();
    let d = DenseMatrix::from_fn(cfg.m, cfg.d1, |_, _| complex_normal(&mut r));
    let e = DenseMatrix::from_fn(cfg.m, cfg.d2, |_, _| complex_normal(&mut r));
    let sm = SubspaceModel::new(d, e)?;
    let mut r = root.derive("signals", 0).rng();
    let u = random_unit_complex(cfg.d1, &mut r);
    let v = random_unit_complex(cfg.d2, &mut r);
    let raw = forward_conv_magnitudes(&sm, &u, &v)?;
    let xi = cfg.noise.generate(cfg.m, root.derive("noise", 0))?;
    let scale = cfg.m as f64;
    let y: Vec<f64> = raw.iter().zip(&xi).map(|(r, n)| r / scale + n).collect();
    let rec = recover_signals(&sm, &Observations::from_y(y), &cfg.solver)?;
    let sin_u = rec.u.as_ref().map(|h| vec_sin_angle(h, &u)).transpose()?;
    let sin_v = rec.v.as_ref().map(|h| vec_sin_angle(h, &v)).transpose()?;
    let out = DeconvOut {
        status: rec.report.status,
        iterations: rec.report.iterations,
        sigma: rec.sigma,
        u_true: pairs(&u),
        v_true: pairs(&v),
        u_hat: rec.u.as_deref().map(pairs),
        v_hat: rec.v.as_deref().map(pairs),
        sin_angle_u: sin_u,
        sin_angle_v: sin_v,
    };
    let path = ctx.write("deconv.json", &out)?;
    if let Some(f) = status_failure(rec.report.status) {
        return Err(f);
    }
    Ok(vec![
        path,
        format!(
            "sin angles u {:.3e}, v {:.3e}",
            sin_u.unwrap_or(f64::NAN),
            sin_v.unwrap_or(f64::NAN)
        ),
    ])
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    #[serde(rename = "M_values")]
    m_values: Vec<usize>,
    d_values: Vec<usize>,
    trials: usize,
    #[serde(default = "default_success_tol")]
    success_tol: f64,
    #[serde(default = "default_pipeline")]
    pipeline: Pipeline,
    #[serde(default)]
    solver: SolverConfig,
    #[serde(default)]
    record_timing: bool,
}

fn default_success_tol() -> f64 {
    1e-4
}

fn default_pipeline() -> Pipeline {
    Pipeline::OracleAnchor
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BenchPtConfig {
    #[allow(dead_code)]
    config_version: u32,
    seed: u64,
    grid: GridSection,
}

#[derive(Serialize)]
struct BenchOut<'a> {
    spec: &'a PhaseGridSpec,
    result: &'a crate::bench::GridResult,
    fit: Option<&'a crate::bench::TransitionFit>,
    fit_error: Option<String>,
    classification_accuracy: Option<f64>,
}

fn cmd_bench_pt(ctx: &Ctx) -> CmdResult {
    let cfg: BenchPtConfig = ctx.config()?;
    let g = cfg.grid;
    let spec = PhaseGridSpec {
        m_values: g.m_values,
        d_values: g.d_values,
        trials: g.trials,
        success_tol: g.success_tol,
        pipeline: g.pipeline,
        base_seed: cfg.seed,
        solver: g.solver,
        record_timing: g.record_timing,
    };
    let result = run_phase_transition(&spec, ctx.workers)?;
    let fit = fit_transition_curve(&result);
    let (fit, fit_error) = match fit {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let csv = ctx.write_text("phase_transition.csv", &grid_to_csv(&result))?;
    let svg = heatmap_svg(&result, fit.as_ref())?;
    let manifest = serde_json::to_string(&ctx.manifest).map_err(crate::Error::from)?;
    let svg = svg.replacen('\n', &format!("\n<metadata>{}</metadata>\n", xml_escape(&manifest)), 1);
    let svg_path = PathBuf::from(ctx.write_text("phase_transition.svg", &svg)?);
    let json = ctx.write(
        "phase_transition.json",
        &BenchOut {
            spec: &spec,
            result: &result,
            fit: fit.as_ref(),
            fit_error: fit_error.clone(),
            classification_accuracy: fit.as_ref().map(|f| classification_accuracy(&result, f)),
        },
    )?;
    let mut lines = vec![csv, svg_path.display().to_string(), json];
    match (&fit, fit_error) {
        (Some(f), _) => lines.push(format!("fitted d = {:.4} M / ln^{:.3} M", f.c, f.alpha)),
        (None, Some(e)) => lines.push(format!("no fit: {e}")),
        _ => {}
    }
    Ok(lines)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseSweepConfig {
    #[allow(dead_code)]
    config_version: u32,
    seed: u64,
    d: usize,
    #[serde(rename = "M")]
    m: usize,
    noise_levels: Vec<f64>,
    trials: usize,
    #[serde(default = "default_pipeline")]
    pipeline: Pipeline,
    #[serde(default)]
    solver: SolverConfig,
}

fn cmd_noise_sweep(ctx: &Ctx) -> CmdResult {
    let cfg: NoiseSweepConfig = ctx.config()?;
    let spec = NoiseSweepSpec {
        d: cfg.d,
        m: cfg.m,
        noise_levels: cfg.noise_levels,
        trials: cfg.trials,
        base_seed: cfg.seed,
        pipeline: cfg.pipeline,
        solver: cfg.solver,
    };
    let rows = run_noise_sweep(&spec, ctx.workers)?;
    let mut csv = String::from("level,mean_abs_noise,median_relerr,max_relerr,all_feasible\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{:e},{:e},{:e},{}\n",
            r.level, r.mean_abs_noise, r.median_relerr, r.max_relerr, r.all_feasible
        ));
    }
    Ok(vec![
        ctx.write_text("noise_sweep.csv", &csv)?,
        ctx.write("noise_sweep.json", &serde_json::json!({ "spec": spec, "rows": rows }))?,
    ])
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InitSweepConfig {
    #[allow(dead_code)]
    config_version: u32,
    seed: u64,
    d: usize,
    #[serde(rename = "M_values")]
    m_values: Vec<usize>,
    trials: usize,
}

fn cmd_init_sweep(ctx: &Ctx) -> CmdResult {
    let cfg: InitSweepConfig = ctx.config()?;
    let rows = run_init_accuracy(cfg.d, &cfg.m_values, cfg.trials, cfg.seed)?;
    let mut csv = String::from("M,d,trials,median_quality\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{},{:e}\n", r.m, cfg.d, cfg.trials, r.median_quality));
    }
    Ok(vec![
        ctx.write_text("init_sweep.csv", &csv)?,
        ctx.write("init_sweep.json", &serde_json::json!({ "d": cfg.d, "rows": rows }))?,
    ])
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifyConfig {
    #[allow(dead_code)]
    config_version: u32,
    seed: u64,
}

fn cmd_verify_moments(ctx: &Ctx) -> CmdResult {
    let cfg: VerifyConfig = ctx.config()?;
    let checks = default_battery(cfg.seed)?;
    let path = ctx.write("moments.json", &serde_json::json!({ "checks": checks }))?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    if !failed.is_empty() {
        return Err(Failure::Numeric(format!("failed checks: {}", failed.join(", "))));
    }
    let mut lines = vec![path];
    lines.extend(
        checks
            .iter()
            .map(|c| format!("{:<24} pass  {:.4} <= {:.4}", c.name, c.metric, c.tolerance)),
    );
    Ok(lines)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
