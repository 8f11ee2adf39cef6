//! Config-driven experiments behind the `gflow` subcommands. Each `α` is an
//! independent job; jobs run on a rayon pool and write their own files.

pub mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

pub use config::{ExperimentConfig, GridSpec, InitSpec, TargetSpec};

use crate::error::{Error, Result};
use crate::integrator::{integrate_w, IntegratorConfig};
use crate::linalg::{fmt17, read_matrix, symmetrize};
use crate::riccati::{ClosedFormEvaluator, Initialization, TrajectorySample};
use crate::rng::gaussian_matrix;
use crate::schedule::{
    interval_endpoints, log_uniform, transition_time, verify_intervals, ScheduleReport,
    VerificationReport,
};
use crate::spectral::TargetMatrix;

/// Environment variable overriding the worker count.
pub const WORKERS_ENV: &str = "RICCATI_WORKERS";

/// Levels bracketing the transition phase.
pub const SWEEP_LEVELS: [f64; 3] = [0.05, 0.5, 0.95];

/// Target plus unit-scale shape, shared by every `α` of a run.
#[derive(Debug, Clone)]
pub struct Instance {
    pub target: Arc<TargetMatrix>,
    pub shape: DMatrix<f64>,
    pub target_seed: Option<u64>,
    pub init_seed: Option<u64>,
}

impl Instance {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let (target, target_seed) = match &cfg.target {
            TargetSpec::File(path) => {
                let y = read_matrix(path)?;
                let t = match cfg.zero_threshold {
                    Some(thr) => TargetMatrix::new(&y, thr)?,
                    None => TargetMatrix::with_default_threshold(&y)?,
                };
                (t, None)
            }
            TargetSpec::Spectrum {
                spectrum,
                rotation_seed,
            } => (TargetMatrix::synthesize(spectrum, *rotation_seed)?, *rotation_seed),
        };
        let n = target.dim();
        let (shape, init_seed) = match &cfg.init {
            InitSpec::Identity => (DMatrix::identity(n, n), None),
            InitSpec::File(path) => (read_matrix(path)?, None),
            InitSpec::Spectral(sigma0) => {
                if sigma0.len() != n {
                    return Err(Error::ConfigInvalid(format!(
                        "init.sigma0 has {} entries, target has dimension {n}",
                        sigma0.len()
                    )));
                }
                if sigma0.iter().any(|s| !(*s >= 0.0)) {
                    return Err(Error::ConfigInvalid("init.sigma0 must be nonnegative".into()));
                }
                let root = DVector::from_iterator(n, sigma0.iter().map(|s| s.sqrt()));
                (target.eigvecs() * DMatrix::from_diagonal(&root), None)
            }
            InitSpec::Random { rows, cols, seed } => {
                if *rows != n {
                    return Err(Error::ConfigInvalid(format!(
                        "init.rows = {rows} but target has dimension {n}"
                    )));
                }
                (gaussian_matrix(*rows, *cols, *seed), Some(*seed))
            }
            InitSpec::PerturbedIdentity { amplitude, seed } => {
                (perturbed_identity(n, *amplitude, *seed), Some(*seed))
            }
        };
        Ok(Self {
            target: Arc::new(target),
            shape,
            target_seed,
            init_seed,
        })
    }

    pub fn evaluator(&self, alpha: f64, rank_tolerance: Option<f64>) -> Result<ClosedFormEvaluator> {
        let init = Initialization::new(&self.shape, alpha, &self.target, rank_tolerance)?;
        ClosedFormEvaluator::new(self.target.clone(), Arc::new(init))
    }

    fn seed_comment(&self) -> String {
        let show = |s: Option<u64>| s.map_or_else(|| "none".to_string(), |v| v.to_string());
        format!(
            "# target_seed={} init_seed={}\n",
            show(self.target_seed),
            show(self.init_seed)
        )
    }
}

/// `I + amplitude · (G + Gᵀ)/2` with `G` a seeded standard normal matrix.
pub fn perturbed_identity(n: usize, amplitude: f64, seed: u64) -> DMatrix<f64> {
    DMatrix::identity(n, n) + symmetrize(&gaussian_matrix(n, n, seed)) * amplitude
}

/// File-name form of `α`, e.g. `1e-6`.
pub fn alpha_tag(alpha: f64) -> String {
    format!("{alpha:e}")
}

fn worker_count(cfg: &ExperimentConfig) -> Result<usize> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        return match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::ConfigInvalid(format!(
                "{WORKERS_ENV} must be a positive integer, got {v:?}"
            ))),
        };
    }
    Ok(cfg.workers.unwrap_or_else(|| {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    }))
}

fn per_alpha<T, F>(cfg: &ExperimentConfig, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(f64) -> Result<T> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(cfg)?)
        .build()
        .map_err(|e| Error::ConfigInvalid(format!("thread pool: {e}")))?;
    pool.install(|| cfg.alphas.par_iter().map(|&a| job(a)).collect())
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Time grid for one `α`.
pub fn build_grid(grid: &GridSpec, evaluator: &ClosedFormEvaluator, epsilon: f64) -> Result<Vec<f64>> {
    match *grid {
        GridSpec::Log { start, stop, points } => Ok(log_uniform(start, stop, points)),
        GridSpec::Linear { start, stop, points } => Ok((0..points)
            .map(|j| start + (stop - start) * j as f64 / (points - 1) as f64)
            .collect()),
        GridSpec::AutoFromSchedule {
            samples_per_interval,
        } => {
            let report = ScheduleReport::for_evaluator(evaluator, epsilon)?;
            let target = evaluator.target();
            let ivs = interval_endpoints(target, report.c_eps, report.big_c_eps, report.alpha);
            let (first, last) = match (ivs.first(), ivs.last()) {
                (Some(f), Some(l)) => (f, l),
                _ => return Err(Error::ConfigInvalid("auto grid needs a nonzero target".into())),
            };
            let lo = 0.1 * first.lower;
            let hi = report.sampling_upper(last);
            if !(lo > 0.0 && hi > lo) {
                return Err(Error::ConfigInvalid(format!(
                    "auto grid range [{lo}, {hi}] is empty for alpha = {}",
                    report.alpha
                )));
            }
            let mut ts = log_uniform(lo, hi, samples_per_interval * ivs.len());
            for iv in &ivs {
                for t in [iv.lower, iv.upper] {
                    if t.is_finite() && t > lo && t < hi {
                        ts.push(t);
                    }
                }
            }
            ts.sort_by(f64::total_cmp);
            ts.dedup();
            Ok(ts)
        }
    }
}

/// CSV header: `t,loss,sig1..sign,dist_k0..dist_kK[,dev_oracle]`.
pub fn csv_header(n: usize, rank: usize, oracle: bool) -> String {
    let mut cols = vec!["t".to_string(), "loss".to_string()];
    cols.extend((1..=n).map(|i| format!("sig{i}")));
    cols.extend((0..=rank).map(|k| format!("dist_k{k}")));
    if oracle {
        cols.push("dev_oracle".into());
    }
    cols.join(",")
}

pub fn csv_row(sample: &TrajectorySample, dev: Option<f64>) -> String {
    let mut cols = vec![fmt17(sample.t), fmt17(sample.loss)];
    cols.extend(sample.eigvals.iter().map(|v| fmt17(*v)));
    cols.extend(sample.distances.iter().map(|v| fmt17(*v)));
    if let Some(d) = dev {
        cols.push(fmt17(d));
    }
    cols.join(",")
}

/// Output of one `solve` job.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub alpha: f64,
    pub path: PathBuf,
    pub samples: Vec<TrajectorySample>,
    pub dev_oracle: Option<Vec<f64>>,
}

/// Writes `traj_alpha=<α>.csv` for each `α`.
pub fn run_solve(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<SolveResult>> {
    let inst = Instance::from_config(cfg)?;
    ensure_dir(out_dir)?;
    per_alpha(cfg, |alpha| {
        let ev = inst.evaluator(alpha, cfg.rank_tolerance)?;
        let grid = build_grid(&cfg.grid, &ev, cfg.epsilon)?;
        let samples = ev.trajectory(&grid)?;
        let dev_oracle = if cfg.oracle {
            let icfg = IntegratorConfig::w_flow().with_tolerances(cfg.oracle_rel_tol, cfg.oracle_abs_tol);
            let ode = integrate_w(&inst.target, &ev.init().w0(), &grid, &icfg)?;
            Some(
                samples
                    .iter()
                    .zip(&ode)
                    .map(|(s, (_, w))| (&s.w - w).norm())
                    .collect::<Vec<f64>>(),
            )
        } else {
            None
        };
        let mut text = String::new();
        let _ = writeln!(text, "# gflow solve alpha={} mode={}", alpha_tag(alpha), ev.mode().name());
        text.push_str(&inst.seed_comment());
        let _ = writeln!(text, "{}", csv_header(inst.target.dim(), inst.target.rank(), cfg.oracle));
        for (i, s) in samples.iter().enumerate() {
            let dev = dev_oracle.as_ref().map(|d| d[i]);
            let _ = writeln!(text, "{}", csv_row(s, dev));
        }
        let path = out_dir.join(format!("traj_alpha={}.csv", alpha_tag(alpha)));
        write_file(&path, &text)?;
        Ok(SolveResult {
            alpha,
            path,
            samples,
            dev_oracle,
        })
    })
}

/// Writes `schedule_alpha=<α>.txt` for each `α`.
pub fn run_schedule(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<ScheduleReport>> {
    let inst = Instance::from_config(cfg)?;
    ensure_dir(out_dir)?;
    per_alpha(cfg, |alpha| {
        let ev = inst.evaluator(alpha, cfg.rank_tolerance)?;
        let report = ScheduleReport::for_evaluator(&ev, cfg.epsilon)?;
        let path = out_dir.join(format!("schedule_alpha={}.txt", alpha_tag(alpha)));
        write_file(&path, &report.to_text())?;
        Ok(report)
    })
}

#[derive(Debug, Clone)]
pub struct VerifyOutcome {
    pub schedules: Vec<ScheduleReport>,
    /// One entry per admissible `α`.
    pub verifications: Vec<VerificationReport>,
}

impl VerifyOutcome {
    pub fn any_admissible(&self) -> bool {
        !self.verifications.is_empty()
    }

    pub fn all_pass(&self) -> bool {
        self.verifications.iter().all(|v| v.overall)
    }
}

/// Verifies every admissible `α`; writes `verify_alpha=<α>.txt` for each.
/// Returns [`Error::NoAdmissibleAlpha`] when none qualifies.
pub fn run_verify(cfg: &ExperimentConfig, out_dir: &Path) -> Result<VerifyOutcome> {
    let inst = Instance::from_config(cfg)?;
    ensure_dir(out_dir)?;
    let jobs = per_alpha(cfg, |alpha| {
        let ev = inst.evaluator(alpha, cfg.rank_tolerance)?;
        let report = ScheduleReport::for_evaluator(&ev, cfg.epsilon)?;
        let path = out_dir.join(format!("verify_alpha={}.txt", alpha_tag(alpha)));
        if !report.alpha_admissible {
            write_file(
                &path,
                &format!("{}skipped: not admissible\n", report.to_text()),
            )?;
            return Ok((report, None));
        }
        let ver = verify_intervals(&ev, &report, cfg.verify_samples)?;
        write_file(&path, &format!("{}{}", report.to_text(), ver.to_text()))?;
        Ok((report, Some(ver)))
    })?;
    let mut schedules = Vec::new();
    let mut verifications = Vec::new();
    for (s, v) in jobs {
        schedules.push(s);
        verifications.extend(v);
    }
    if verifications.is_empty() {
        return Err(Error::NoAdmissibleAlpha);
    }
    Ok(VerifyOutcome {
        schedules,
        verifications,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    /// One-based mode index.
    pub mode: usize,
    pub times: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
    /// Least-squares slope of `t_50%` against `ln(1/α)` per mode; `None` with
    /// a single `α`.
    pub slopes: Option<Vec<f64>>,
}

/// Slope of the least-squares line through `(x, y)`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Transition times at [`SWEEP_LEVELS`] for each nonzero mode and `α`;
/// writes `sweep.csv`.
pub fn run_sweep(cfg: &ExperimentConfig, out_dir: &Path) -> Result<SweepSummary> {
    let inst = Instance::from_config(cfg)?;
    ensure_dir(out_dir)?;
    let probe = inst.evaluator(cfg.alphas[0], cfg.rank_tolerance)?;
    let sigma0 = probe
        .spectral_sigma0()
        .ok_or_else(|| Error::ConfigInvalid("sweep needs a spectral initialization".into()))?
        .clone();
    let target = &inst.target;
    let rank = target.rank();
    let per_alpha_rows = per_alpha(cfg, |alpha| {
        (0..rank)
            .map(|i| {
                let mut times = [0.0; 3];
                for (slot, level) in times.iter_mut().zip(SWEEP_LEVELS) {
                    *slot = transition_time(target.sigma(i), sigma0[i], alpha, level)?;
                }
                Ok(SweepRow {
                    alpha,
                    mode: i + 1,
                    times,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let rows: Vec<SweepRow> = per_alpha_rows.into_iter().flatten().collect();
    let slopes = (cfg.alphas.len() > 1).then(|| {
        (1..=rank)
            .map(|mode| {
                let (x, y): (Vec<f64>, Vec<f64>) = rows
                    .iter()
                    .filter(|r| r.mode == mode)
                    .map(|r| ((1.0 / r.alpha).ln(), r.times[1]))
                    .unzip();
                ls_slope(&x, &y)
            })
            .collect::<Vec<f64>>()
    });

    let mut text = String::new();
    text.push_str("# gflow sweep\n");
    text.push_str(&inst.seed_comment());
    text.push_str("alpha,mode,t05,t50,t95");
    if slopes.is_some() {
        text.push_str(",slope_t50");
    }
    text.push('\n');
    for r in &rows {
        let _ = write!(
            text,
            "{},{},{},{},{}",
            fmt17(r.alpha),
            r.mode,
            fmt17(r.times[0]),
            fmt17(r.times[1]),
            fmt17(r.times[2])
        );
        if let Some(s) = &slopes {
            let _ = write!(text, ",{}", fmt17(s[r.mode - 1]));
        }
        text.push('\n');
    }
    write_file(&out_dir.join("sweep.csv"), &text)?;
    Ok(SweepSummary { rows, slopes })
}

/// Parsed trajectory CSV: comment lines skipped, header kept.
#[derive(Debug, Clone)]
pub struct TrajectoryCsv {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn read_trajectory_csv(path: &Path) -> Result<TrajectoryCsv> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::ConfigInvalid(format!("{} has no header", path.display())))?
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .map(|l| {
            l.split(',')
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|e| Error::ConfigInvalid(format!("{}: {e}", path.display())))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrajectoryCsv { header, rows })
}

impl TrajectoryCsv {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }
}
