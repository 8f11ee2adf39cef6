//! Instance builders and invariant checks shared by the property suite and
//! the acceptance run. Each check returns the measured quantity so callers
//! can both assert and report it.

#![allow(dead_code)]

use std::sync::Arc;

use gflow::linalg::{sorted_symmetric_eigenvalues, sym_spectral_norm};
use gflow::riccati::spectral_mode_value;
use gflow::rng::{gaussian_matrix, haar_orthogonal};
use gflow::schedule::{interval_endpoints, transition_time, ScheduleReport};
use gflow::{
    integrate_u, integrate_w, ClosedFormEvaluator, Initialization, IntegratorConfig, TargetMatrix,
};
use nalgebra::{DMatrix, DVector};

/// Geometric spectrum `top · ratio^i`, pairwise distinct for `ratio < 1`.
pub fn geometric_spectrum(n: usize, top: f64, ratio: f64) -> Vec<f64> {
    (0..n).map(|i| top * ratio.powi(i as i32)).collect()
}

/// Rotated target with the given spectrum and a Gaussian `n × n` shape.
pub fn full_rank_instance(spectrum: &[f64], seed: u64, alpha: f64) -> ClosedFormEvaluator {
    let target = Arc::new(TargetMatrix::synthesize(spectrum, Some(seed)).unwrap());
    let n = spectrum.len();
    let shape = gaussian_matrix(n, n, seed.wrapping_add(1_000));
    let init = Arc::new(Initialization::new(&shape, alpha, &target, None).unwrap());
    ClosedFormEvaluator::new(target, init).unwrap()
}

/// Rotated target whose initialization is diagonal in the target eigenbasis.
pub fn spectral_instance(spectrum: &[f64], sigma0: &[f64], seed: u64, alpha: f64) -> ClosedFormEvaluator {
    let target = Arc::new(TargetMatrix::synthesize(spectrum, Some(seed)).unwrap());
    let root = DVector::from_iterator(sigma0.len(), sigma0.iter().map(|s| s.sqrt()));
    let shape = target.eigvecs() * DMatrix::from_diagonal(&root);
    let init = Arc::new(Initialization::new(&shape, alpha, &target, None).unwrap());
    ClosedFormEvaluator::new(target, init).unwrap()
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    gflow::schedule::log_uniform(lo, hi, n)
}

// ---------------------------------------------------------------- spectral

/// `max_k | ||Y − Ŷ_k||₂ − σ_{k+1} |` over `k = 0..=n`.
pub fn eckart_young_error(target: &TargetMatrix) -> f64 {
    (0..=target.dim())
        .map(|k| {
            let yk = target.best_rank_k(k).unwrap().matrix;
            let expect = target.eigvals().get(k).copied().unwrap_or(0.0).max(0.0);
            (sym_spectral_norm(&(target.matrix() - yk)) - expect).abs()
        })
        .fold(0.0, f64::max)
}

/// `max_k ||best_rank_k(Ŷ_k) − Ŷ_k||_F`.
pub fn idempotence_error(target: &TargetMatrix) -> f64 {
    (0..=target.dim())
        .map(|k| {
            let yk = target.best_rank_k(k).unwrap().matrix;
            let again = TargetMatrix::with_default_threshold(&yk)
                .unwrap()
                .best_rank_k(k)
                .unwrap()
                .matrix;
            (again - yk).norm()
        })
        .fold(0.0, f64::max)
}

/// Largest eigenvalue difference between `Y` and `QYQᵀ`.
pub fn target_conjugation_error(target: &TargetMatrix, q_seed: u64) -> f64 {
    let q = haar_orthogonal(target.dim(), q_seed);
    let rotated = TargetMatrix::with_default_threshold(&(&q * target.matrix() * q.transpose())).unwrap();
    target
        .eigvals()
        .iter()
        .zip(rotated.eigvals().iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------- riccati

/// Centered-difference residual of `Ẇ = WY + YW − 2W²` at `t`, and the
/// allowed bound `1e-4 · (1 + ||Y||₂²)`.
pub fn ode_residual(ev: &ClosedFormEvaluator, t: f64) -> (f64, f64) {
    let y = ev.target().matrix();
    let h = 1e-5 * t.max(1.0);
    let lo = (t - h).max(0.0);
    let hi = t + h;
    let fd = (ev.eval_w(hi).unwrap() - ev.eval_w(lo).unwrap()) / (hi - lo);
    let w = ev.eval_w(t).unwrap();
    let rhs = &w * y + y * &w - (&w * &w) * 2.0;
    let s1 = ev.target().sigma(0);
    ((fd - rhs).norm(), 1e-4 * (1.0 + s1 * s1))
}

/// Whether `W` is symmetric to `1e-10 ||W||_F` and PSD to `−1e-9 ||W||₂`.
pub fn symmetric_psd(w: &DMatrix<f64>) -> bool {
    let fro = w.norm();
    let asym = (w - w.transpose()).norm();
    let eig = sorted_symmetric_eigenvalues(w);
    let top = eig.first().copied().unwrap_or(0.0).abs();
    let bottom = eig.last().copied().unwrap_or(0.0);
    asym <= 1e-10 * fro && bottom >= -1e-9 * top
}

/// Every evaluation path available for `ev` at `t`.
pub fn all_paths(ev: &ClosedFormEvaluator, t: f64, with_lti: bool) -> Vec<(&'static str, DMatrix<f64>)> {
    let mut out = vec![
        ("general", ev.eval_w(t).unwrap()),
        ("woodbury", ev.eval_w_rank_deficient(t).unwrap()),
    ];
    if with_lti && t <= ev.lti_guard() {
        out.push(("lti", ev.eval_w_lti(t).unwrap()));
    }
    if ev.init().is_spectral() {
        out.push(("spectral", ev.eval_w_spectral(t).unwrap()));
    }
    out
}

/// Largest pairwise Frobenius distance between [`all_paths`].
pub fn path_spread(ev: &ClosedFormEvaluator, t: f64, with_lti: bool) -> f64 {
    let paths = all_paths(ev, t, with_lti);
    let mut worst: f64 = 0.0;
    for i in 0..paths.len() {
        for j in i + 1..paths.len() {
            worst = worst.max((&paths[i].1 - &paths[j].1).norm());
        }
    }
    worst
}

/// Largest `t` at which the literal linear-system path is expected to keep
/// eight digits: its rounding error grows like `ε_mach e^{(σ₁−σₙ)t}`.
pub fn lti_precision_horizon(ev: &ClosedFormEvaluator) -> f64 {
    let n = ev.target().dim();
    let gap = ev.target().sigma(0) - ev.target().sigma(n - 1);
    if gap > 0.0 {
        (10.0 / gap).min(ev.lti_guard())
    } else {
        ev.lti_guard()
    }
}

/// Max over `grid` of `||eval_w − U Uᵀ||_F` with `U` from the factor flow.
pub fn factor_flow_deviation(ev: &ClosedFormEvaluator, grid: &[f64]) -> f64 {
    let u0 = ev.init().shape() * ev.init().scale().sqrt();
    let traj = integrate_u(ev.target(), &u0, grid, &IntegratorConfig::u_flow()).unwrap();
    traj.iter()
        .map(|(t, u)| (ev.eval_w(*t).unwrap() - u * u.transpose()).norm())
        .fold(0.0, f64::max)
}

/// Max over `grid` of `||eval_w − W_ode||_F` with the product flow at
/// `cfg`.
pub fn product_flow_deviation(ev: &ClosedFormEvaluator, grid: &[f64], cfg: &IntegratorConfig) -> f64 {
    let traj = integrate_w(ev.target(), &ev.init().w0(), grid, cfg).unwrap();
    traj.iter()
        .map(|(t, w)| (ev.eval_w(*t).unwrap() - w).norm())
        .fold(0.0, f64::max)
}

/// Whether every spectral mode with `0 < α σ₀ < σ_Y` increases strictly
/// along `grid` until it is within rounding of `σ_Y`, and never decreases.
pub fn scalar_growth_monotone(ev: &ClosedFormEvaluator, grid: &[f64]) -> bool {
    let sigma0 = ev.spectral_sigma0().unwrap().clone();
    let alpha = ev.init().scale();
    (0..ev.target().dim()).all(|i| {
        let sy = ev.target().sigma(i);
        if !(alpha * sigma0[i] > 0.0 && alpha * sigma0[i] < sy) {
            return true;
        }
        let values: Vec<f64> = grid.iter().map(|&t| ev.eval_sigma_spectral(i, t).unwrap()).collect();
        values.windows(2).all(|p| {
            let saturated = p[0] >= sy * (1.0 - 1e-12);
            p[1] > p[0] || (saturated && p[1] >= p[0])
        })
    })
}

/// `||W(50/σ_K) − Y||_F / ||Y||_F`.
pub fn convergence_gap(ev: &ClosedFormEvaluator) -> f64 {
    let target = ev.target();
    let t = 50.0 / target.sigma(target.rank() - 1);
    (ev.eval_w(t).unwrap() - target.matrix()).norm() / target.matrix().norm()
}

/// `||W_Q(t) − Q W(t) Qᵀ||_F` for the instance conjugated by a Haar `Q`.
pub fn solution_conjugation_error(ev: &ClosedFormEvaluator, q_seed: u64, t: f64) -> f64 {
    let target = ev.target();
    let q = haar_orthogonal(target.dim(), q_seed);
    let yq = &q * target.matrix() * q.transpose();
    let tq = Arc::new(TargetMatrix::new(&yq, target.zero_threshold()).unwrap());
    let uq = &q * ev.init().shape();
    let init = Arc::new(Initialization::new(&uq, ev.init().scale(), &tq, None).unwrap());
    let evq = ClosedFormEvaluator::new(tq, init).unwrap();
    (evq.eval_w(t).unwrap() - &q * ev.eval_w(t).unwrap() * q.transpose()).norm()
}

// ---------------------------------------------------------------- integrator

/// Deviation from `eval_w` for `rel_tol = start, start/2, …` (`halvings + 1`
/// runs, `abs_tol = rel_tol · 1e-3`).
pub fn halving_deviations(ev: &ClosedFormEvaluator, grid: &[f64], start: f64, halvings: usize) -> Vec<f64> {
    (0..=halvings)
        .map(|j| {
            let rel = start / f64::powi(2.0, j as i32);
            let cfg = IntegratorConfig::w_flow().with_tolerances(rel, rel * 1e-3);
            product_flow_deviation(ev, grid, &cfg)
        })
        .collect()
}

/// Global deviation budget of one integration run: the closed-form
/// comparison budget `1e-6 · (1 + ||Y||_F)` at the default `rel_tol = 1e-9`,
/// scaled linearly with the tolerances.
pub fn tolerance_budget(cfg: &IntegratorConfig, target: &TargetMatrix) -> f64 {
    1e3 * (cfg.rel_tol * (1.0 + target.matrix().norm()) + cfg.abs_tol)
}

/// `(max ||U Uᵀ − W||_F, 2 · (budget_u + budget_w))` at default tolerances.
pub fn flow_agreement(ev: &ClosedFormEvaluator, grid: &[f64]) -> (f64, f64) {
    let target = ev.target();
    let (ucfg, wcfg) = (IntegratorConfig::u_flow(), IntegratorConfig::w_flow());
    let u0 = ev.init().shape() * ev.init().scale().sqrt();
    let us = integrate_u(target, &u0, grid, &ucfg).unwrap();
    let ws = integrate_w(target, &ev.init().w0(), grid, &wcfg).unwrap();
    let dev = us
        .iter()
        .zip(&ws)
        .map(|((_, u), (_, w))| (u * u.transpose() - w).norm())
        .fold(0.0, f64::max);
    (dev, 2.0 * (tolerance_budget(&ucfg, target) + tolerance_budget(&wcfg, target)))
}

/// Largest loss increase between consecutive samples of either flow.
pub fn worst_loss_increase(ev: &ClosedFormEvaluator, grid: &[f64]) -> f64 {
    let target = ev.target();
    let y = target.matrix();
    let loss = |w: &DMatrix<f64>| 0.25 * (y - w).norm_squared();
    let u0 = ev.init().shape() * ev.init().scale().sqrt();
    let us: Vec<f64> = integrate_u(target, &u0, grid, &IntegratorConfig::u_flow())
        .unwrap()
        .iter()
        .map(|(_, u)| loss(&(u * u.transpose())))
        .collect();
    let ws: Vec<f64> = integrate_w(target, &ev.init().w0(), grid, &IntegratorConfig::w_flow())
        .unwrap()
        .iter()
        .map(|(_, w)| loss(w))
        .collect();
    us.windows(2)
        .chain(ws.windows(2))
        .map(|p| p[1] - p[0])
        .fold(f64::NEG_INFINITY, f64::max)
}

// ---------------------------------------------------------------- schedule

/// Largest relative mismatch of `a_k · 2σ_k = ln(C/α)` and
/// `b_k · 2σ_{k+1} = ln(c/α)`.
pub fn interval_transcription_error(target: &TargetMatrix, c: f64, big_c: f64, alpha: f64) -> f64 {
    let up = (big_c / alpha).ln();
    let down = (c / alpha).ln();
    interval_endpoints(target, c, big_c, alpha)
        .iter()
        .map(|iv| {
            let a = (iv.lower * 2.0 * target.sigma(iv.k - 1) - up).abs() / up.abs();
            let b = if iv.upper.is_finite() {
                (iv.upper * 2.0 * target.sigma(iv.k) - down).abs() / down.abs()
            } else {
                0.0
            };
            a.max(b)
        })
        .fold(0.0, f64::max)
}

/// Whether endpoints move right as `α` shrinks, with slopes `1/(2σ_k)` and
/// `1/(2σ_{k+1})` in `ln(1/α)` (relative `1e-12`).
pub fn intervals_nest(target: &TargetMatrix, c: f64, big_c: f64, alpha: f64, shrink: f64) -> bool {
    let smaller = alpha / shrink;
    let before = interval_endpoints(target, c, big_c, alpha);
    let after = interval_endpoints(target, c, big_c, smaller);
    let dlog = shrink.ln();
    before.iter().zip(&after).all(|(p, q)| {
        let lower_slope = (q.lower - p.lower) / dlog;
        let ok_lower = q.lower > p.lower
            && (lower_slope - 1.0 / (2.0 * target.sigma(p.k - 1))).abs() <= 1e-9 * lower_slope;
        let ok_upper = if p.upper.is_finite() {
            let slope = (q.upper - p.upper) / dlog;
            q.upper > p.upper && (slope - 1.0 / (2.0 * target.sigma(p.k))).abs() <= 1e-9 * slope
        } else {
            q.upper.is_infinite()
        };
        ok_lower && ok_upper
    })
}

/// Relative error of `σ(transition_time(level)) = level · σ_Y`.
pub fn transition_round_trip(sigma_y: f64, sigma0: f64, alpha: f64, level: f64) -> f64 {
    let t = transition_time(sigma_y, sigma0, alpha, level).unwrap();
    let v = spectral_mode_value(sigma_y, sigma0, alpha, t);
    (v - level * sigma_y).abs() / (level * sigma_y)
}

/// All three endpoint inequalities of the spectral bound chain.
pub fn bound_chain_holds(ev: &ClosedFormEvaluator, report: &ScheduleReport) -> bool {
    gflow::schedule::spectral_bound_chain(ev, report)
        .unwrap()
        .iter()
        .all(|c| c.learned_ok && c.pending_ok && c.null_ok)
}
