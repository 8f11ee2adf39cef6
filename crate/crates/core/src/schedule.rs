//! Incremental-learning schedule: the constants `c_ε`, `C_ε`, the smallness
//! conditions on `α`, the time windows `I_k`, and checks of the guarantee
//! `||W(t) − Ŷ_k||₂ ≤ ε` for `t ∈ I_k`.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{spd_inverse_equilibrated, spectral_norm, sym_spectral_norm};
use crate::riccati::{stable_core, ClosedFormEvaluator};
use crate::spectral::TargetMatrix;

/// Relative gap below which two nonzero eigenvalues count as repeated.
pub const DISTINCTNESS_TOL: f64 = 1e-9;

/// Default number of samples per interval.
pub const DEFAULT_SAMPLES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regime {
    /// Rotated initial product is diagonal.
    Spectral,
    /// Rotated initial product is invertible; `m` is `max(||V||, ||V⁻¹||)`.
    General { m: f64 },
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::Spectral => "spectral",
            Regime::General { .. } => "general",
        }
    }
}

/// `c_ε = ε / max_i σ_{i,0}`, `C_ε = σ₁² / (ε min_{i≤K} σ_{i,0})`.
pub fn constants_spectral(target: &TargetMatrix, sigma0: &[f64], epsilon: f64) -> Result<(f64, f64)> {
    let k = target.rank();
    if sigma0.len() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: target.dim(),
            got: sigma0.len(),
        });
    }
    if k == 0 {
        return Err(Error::InvalidArgument("target has no nonzero eigenvalue".into()));
    }
    check_epsilon(epsilon, target.sigma(k - 1))?;
    if let Some(i) = (0..k).find(|&i| !(sigma0[i] > 0.0)) {
        return Err(Error::ZeroModeWeight(i));
    }
    let max0 = sigma0.iter().fold(0.0_f64, |m, v| m.max(*v));
    let min0 = sigma0[..k].iter().fold(f64::INFINITY, |m, v| m.min(*v));
    let s1 = target.sigma(0);
    Ok((epsilon / max0, s1 * s1 / (epsilon * min0)))
}

/// `c_ε = ε / (16 M²)`, `C_ε = 16 σ₁² M² / ε`.
pub fn constants_general(
    init: &crate::riccati::Initialization,
    target: &TargetMatrix,
    epsilon: f64,
) -> Result<(f64, f64)> {
    let m = init.m_bound().ok_or(Error::RankDeficientInit)?;
    let k = target.rank();
    if k == 0 {
        return Err(Error::InvalidArgument("target has no nonzero eigenvalue".into()));
    }
    check_epsilon(epsilon, target.sigma(k - 1).min(1.0))?;
    let s1 = target.sigma(0);
    Ok((epsilon / (16.0 * m * m), 16.0 * s1 * s1 * m * m / epsilon))
}

fn check_epsilon(epsilon: f64, bound: f64) -> Result<()> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    if epsilon > bound {
        return Err(Error::EpsilonTooLarge { epsilon, bound });
    }
    Ok(())
}

/// Whether the nonzero eigenvalues are pairwise distinct at
/// [`DISTINCTNESS_TOL`] relative gap.
pub fn distinct_spectrum(target: &TargetMatrix) -> bool {
    (1..target.rank()).all(|k| {
        let hi = target.sigma(k - 1);
        (hi - target.sigma(k)) / hi > DISTINCTNESS_TOL
    })
}

/// `(−ln α + ln c_ε) / (−ln α + ln C_ε)`.
pub fn ratio_lhs(c_eps: f64, big_c_eps: f64, alpha: f64) -> f64 {
    (c_eps / alpha).ln() / (big_c_eps / alpha).ln()
}

/// `max_{1≤k≤K−1} σ_{k+1} / σ_k`; zero when `K ≤ 1`.
pub fn ratio_rhs(target: &TargetMatrix) -> f64 {
    (1..target.rank())
        .map(|k| target.sigma(k) / target.sigma(k - 1))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Admissibility {
    pub admissible: bool,
    /// `"ok"` or the first failed condition: `"distinctness"`,
    /// `"scale bound"`, `"log-ratio"`.
    pub reason: &'static str,
    pub lhs: f64,
    pub rhs: f64,
}

/// Checks distinctness, then the scale bound (`α ≤ c_ε`, or `α ≤ c_ε / M` in
/// the general regime), then the log-ratio condition.
pub fn admissibility(
    target: &TargetMatrix,
    c_eps: f64,
    big_c_eps: f64,
    alpha: f64,
    regime: Regime,
) -> Admissibility {
    let lhs = ratio_lhs(c_eps, big_c_eps, alpha);
    let rhs = ratio_rhs(target);
    let verdict = |admissible, reason| Admissibility {
        admissible,
        reason,
        lhs,
        rhs,
    };
    if target.rank() == 0 {
        return verdict(false, "zero target");
    }
    if !distinct_spectrum(target) {
        return verdict(false, "distinctness");
    }
    let scale_bound = match regime {
        Regime::Spectral => c_eps,
        Regime::General { m } => c_eps / m,
    };
    if !(alpha > 0.0 && alpha <= scale_bound) {
        return verdict(false, "scale bound");
    }
    // The ratio condition ranges over k = 1..K−1 and is vacuous for K = 1.
    if target.rank() >= 2 && !(lhs > rhs) {
        return verdict(false, "log-ratio");
    }
    verdict(true, "ok")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    /// One-based rank index.
    pub k: usize,
    pub lower: f64,
    /// `+∞` for `k = K`.
    pub upper: f64,
}

/// Raw interval endpoints, with no admissibility check.
pub fn interval_endpoints(target: &TargetMatrix, c_eps: f64, big_c_eps: f64, alpha: f64) -> Vec<Interval> {
    let rank = target.rank();
    let up = (big_c_eps / alpha).ln();
    let down = (c_eps / alpha).ln();
    (1..=rank)
        .map(|k| {
            let lower = up / (2.0 * target.sigma(k - 1));
            let next = target.sigma(k);
            let upper = if k < rank && next > 0.0 {
                down / (2.0 * next)
            } else {
                f64::INFINITY
            };
            Interval { k, lower, upper }
        })
        .collect()
}

/// The `K` windows `I_k`. Refuses when distinctness, `α ≤ c_ε`, or the
/// log-ratio condition fails.
pub fn intervals(target: &TargetMatrix, c_eps: f64, big_c_eps: f64, alpha: f64) -> Result<Vec<Interval>> {
    let adm = admissibility(target, c_eps, big_c_eps, alpha, Regime::Spectral);
    if !adm.admissible {
        return Err(Error::NotAdmissible(adm.reason.to_string()));
    }
    Ok(interval_endpoints(target, c_eps, big_c_eps, alpha))
}

/// Time at which the scalar trajectory reaches `level · σ_Y`.
pub fn transition_time(sigma_y: f64, sigma0: f64, alpha: f64, level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level must lie in (0, 1), got {level}")));
    }
    if !(sigma_y > 0.0 && sigma0 > 0.0 && alpha > 0.0) {
        return Err(Error::InvalidArgument(
            "sigma_y, sigma0 and alpha must be positive".into(),
        ));
    }
    let start = alpha * sigma0;
    if !(start < level * sigma_y) {
        return Err(Error::LevelUnreachable { level });
    }
    let ratio = level * (sigma_y - start) / ((1.0 - level) * start);
    Ok(ratio.ln() / (2.0 * sigma_y))
}

#[derive(Debug, Clone)]
pub struct ScheduleReport {
    pub regime: Regime,
    pub epsilon: f64,
    pub c_eps: f64,
    pub big_c_eps: f64,
    pub alpha: f64,
    pub alpha_admissible: bool,
    pub reason: &'static str,
    pub ratio_condition_lhs: f64,
    pub ratio_condition_rhs: f64,
    /// Empty unless admissible.
    pub intervals: Vec<Interval>,
    pub distinctness_ok: bool,
    pub rank: usize,
    pub sigma_k: f64,
}

impl ScheduleReport {
    /// Spectral regime when `W̃₀` is diagonal, general otherwise.
    pub fn for_evaluator(evaluator: &ClosedFormEvaluator, epsilon: f64) -> Result<Self> {
        let target = evaluator.target();
        let init = evaluator.init();
        let alpha = init.scale();
        if init.is_spectral() {
            let sigma0: Vec<f64> = init.w_tilde0().diagonal().iter().copied().collect();
            let (c, big_c) = constants_spectral(target, &sigma0, epsilon)?;
            Ok(Self::assemble(target, Regime::Spectral, epsilon, c, big_c, alpha))
        } else {
            let (c, big_c) = constants_general(init, target, epsilon)?;
            let m = init.m_bound().ok_or(Error::RankDeficientInit)?;
            Ok(Self::assemble(target, Regime::General { m }, epsilon, c, big_c, alpha))
        }
    }

    pub fn assemble(
        target: &TargetMatrix,
        regime: Regime,
        epsilon: f64,
        c_eps: f64,
        big_c_eps: f64,
        alpha: f64,
    ) -> Self {
        let adm = admissibility(target, c_eps, big_c_eps, alpha, regime);
        let intervals = if adm.admissible {
            interval_endpoints(target, c_eps, big_c_eps, alpha)
        } else {
            Vec::new()
        };
        let rank = target.rank();
        Self {
            regime,
            epsilon,
            c_eps,
            big_c_eps,
            alpha,
            alpha_admissible: adm.admissible,
            reason: adm.reason,
            ratio_condition_lhs: adm.lhs,
            ratio_condition_rhs: adm.rhs,
            intervals,
            distinctness_ok: distinct_spectrum(target),
            rank,
            sigma_k: if rank > 0 { target.sigma(rank - 1) } else { 0.0 },
        }
    }

    /// Upper end of the sampled window for interval `iv`; the last interval is
    /// truncated at `a_K + (2 / σ_K) ln(C_ε / α)`.
    pub fn sampling_upper(&self, iv: &Interval) -> f64 {
        if iv.upper.is_finite() {
            iv.upper
        } else {
            iv.lower + 2.0 / self.sigma_k * (self.big_c_eps / self.alpha).ln()
        }
    }

    /// `key: value` lines; intervals as `I_k = [a, b]`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "regime: {}", self.regime.name());
        let _ = writeln!(s, "epsilon: {}", fmt12(self.epsilon));
        let _ = writeln!(s, "alpha: {}", fmt12(self.alpha));
        let _ = writeln!(s, "c_eps: {}", fmt12(self.c_eps));
        let _ = writeln!(s, "C_eps: {}", fmt12(self.big_c_eps));
        if let Regime::General { m } = self.regime {
            let _ = writeln!(s, "M: {}", fmt12(m));
        }
        let _ = writeln!(s, "admissible: {}", self.alpha_admissible);
        let _ = writeln!(s, "reason: {}", self.reason);
        let _ = writeln!(s, "ratio_condition_lhs: {}", fmt12(self.ratio_condition_lhs));
        let _ = writeln!(s, "ratio_condition_rhs: {}", fmt12(self.ratio_condition_rhs));
        let _ = writeln!(s, "distinctness_ok: {}", self.distinctness_ok);
        let _ = writeln!(s, "K: {}", self.rank);
        for iv in &self.intervals {
            let _ = writeln!(s, "I_{} = [{}, {}]", iv.k, fmt12(iv.lower), fmt12(iv.upper));
        }
        s
    }
}

/// 12 significant digits, `inf` for infinities.
pub fn fmt12(x: f64) -> String {
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{x:.11e}")
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let mut v: Vec<f64> = (0..n)
                .map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64)
                .collect();
            v[n - 1] = hi;
            v
        }
    }
}

/// `n` log-uniform points from `lo` to `hi` inclusive.
pub fn log_uniform(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            let mut v: Vec<f64> = (0..n)
                .map(|j| (a + (b - a) * j as f64 / (n - 1) as f64).exp())
                .collect();
            v[0] = lo;
            v[n - 1] = hi;
            v
        }
    }
}

#[derive(Debug, Clone)]
pub struct IntervalCheck {
    pub k: usize,
    pub lower: f64,
    pub upper: f64,
    pub samples: Vec<f64>,
    pub max_distance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub epsilon: f64,
    pub alpha: f64,
    pub per_interval: Vec<IntervalCheck>,
    pub overall: bool,
}

impl VerificationReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "alpha: {}", fmt12(self.alpha));
        let _ = writeln!(s, "epsilon: {}", fmt12(self.epsilon));
        for c in &self.per_interval {
            let _ = writeln!(
                s,
                "I_{} = [{}, {}]: samples {} max_distance {} {}",
                c.k,
                fmt12(c.lower),
                fmt12(c.upper),
                c.samples.len(),
                fmt12(c.max_distance),
                if c.pass { "pass" } else { "fail" }
            );
        }
        let _ = writeln!(s, "overall: {}", if self.overall { "pass" } else { "fail" });
        s
    }
}

/// Samples each interval uniformly and checks `||W(t) − Ŷ_k||₂ ≤ ε`.
pub fn verify_intervals(
    evaluator: &ClosedFormEvaluator,
    report: &ScheduleReport,
    samples_per_interval: usize,
) -> Result<VerificationReport> {
    if !report.alpha_admissible {
        return Err(Error::NotAdmissible(report.reason.to_string()));
    }
    if samples_per_interval == 0 {
        return Err(Error::InvalidArgument("samples_per_interval must be positive".into()));
    }
    if evaluator.init().scale() != report.alpha || evaluator.target().rank() != report.rank {
        return Err(Error::InvalidArgument(
            "evaluator and schedule report describe different instances".into(),
        ));
    }
    let target = evaluator.target();
    let mut per_interval = Vec::with_capacity(report.intervals.len());
    for iv in &report.intervals {
        let upper = report.sampling_upper(iv);
        let samples = linspace(iv.lower, upper, samples_per_interval);
        let yk = target.best_rank_k(iv.k)?.matrix;
        let distances: Vec<f64> = samples
            .par_iter()
            .map(|&t| evaluator.eval_w(t).map(|w| sym_spectral_norm(&(w - &yk))))
            .collect::<Result<_>>()?;
        let max_distance = distances.iter().fold(0.0_f64, |m, d| m.max(*d));
        per_interval.push(IntervalCheck {
            k: iv.k,
            lower: iv.lower,
            upper: iv.upper,
            samples,
            max_distance,
            pass: max_distance <= report.epsilon,
        });
    }
    let overall = per_interval.iter().all(|c| c.pass);
    Ok(VerificationReport {
        epsilon: report.epsilon,
        alpha: report.alpha,
        per_interval,
        overall,
    })
}

/// Block norms of `Φᵀ W(t) Φ` split at rank `k`, plus the proof
/// intermediates `Δ` and `Ṽ₁`.
#[derive(Debug, Clone, Copy)]
pub struct BlockDiagnostics {
    pub k: usize,
    pub t: f64,
    pub norm_h11_minus_sigma_k: f64,
    pub norm_h12: f64,
    pub norm_h22: f64,
    pub norm_delta: f64,
    pub norm_v_tilde1: f64,
}

impl BlockDiagnostics {
    pub fn max_h_norm(&self) -> f64 {
        self.norm_h11_minus_sigma_k.max(self.norm_h12).max(self.norm_h22)
    }
}

/// `k` is one-based, `1 ≤ k ≤ K`; needs a full-rank initialization.
pub fn block_diagnostics(evaluator: &ClosedFormEvaluator, k: usize, t: f64) -> Result<BlockDiagnostics> {
    let target = evaluator.target();
    let init = evaluator.init();
    let v = init.v().ok_or(Error::RankDeficientInit)?;
    let rank = target.rank();
    if k == 0 || k > rank {
        return Err(Error::IndexOutOfRange { index: k, max: rank });
    }
    let n = target.dim();
    let alpha = init.scale();
    let wt = evaluator.eval_w_tilde(t)?;
    let tail = n - k;

    let h11 = wt.view((0, 0), (k, k)).clone_owned();
    let sigma_k = DMatrix::from_fn(k, k, |i, j| if i == j { target.sigma(i) } else { 0.0 });
    let norm_h11_minus_sigma_k = sym_spectral_norm(&(h11 - sigma_k));
    let (norm_h12, norm_h22) = if tail > 0 {
        let h12 = wt.view((0, k), (k, tail)).clone_owned();
        let h22 = wt.view((k, k), (tail, tail)).clone_owned();
        (spectral_norm(&h12), sym_spectral_norm(&h22))
    } else {
        (0.0, 0.0)
    };

    let rates = target.rates();
    let v11 = v.view((0, 0), (k, k)).clone_owned();
    let v_tilde1 = if tail > 0 {
        // (V22 + α G2)⁻¹ = S2⁻¹ B22⁻¹ S2⁻¹ with B22 the decayed tail block.
        let tail_rates = rates.rows(k, tail).clone_owned();
        let v22 = v.view((k, k), (tail, tail)).clone_owned();
        let b22 = stable_core(&v22, &tail_rates, alpha, t);
        let b22_inv = spd_inverse_equilibrated(&b22)?;
        let v12_s2inv = DMatrix::from_fn(k, tail, |i, j| {
            v[(i, k + j)] * (-tail_rates[j] * t).exp()
        });
        &v11 - &v12_s2inv * b22_inv * v12_s2inv.transpose()
    } else {
        v11
    };
    let delta = DMatrix::from_fn(k, k, |i, j| {
        let decay = (-(rates[i] + rates[j]) * t).exp();
        let mut d = v_tilde1[(i, j)] * decay / alpha;
        if i == j {
            d += decay / rates[i];
        }
        d
    });
    Ok(BlockDiagnostics {
        k,
        t,
        norm_h11_minus_sigma_k,
        norm_h12,
        norm_h22,
        norm_delta: sym_spectral_norm(&delta),
        norm_v_tilde1: sym_spectral_norm(&v_tilde1),
    })
}

/// Endpoint checks of the spectral-regime bound chain for one interval:
/// modes `l ≤ k` are within ε of their target at `a_l`-style lower ends,
/// modes `k < l ≤ K` stay below ε at `b_k`, and null modes never exceed
/// `α σ_{l,0} ≤ ε`.
#[derive(Debug, Clone)]
pub struct SpectralBoundCheck {
    pub k: usize,
    pub learned_ok: bool,
    pub pending_ok: bool,
    pub null_ok: bool,
}

pub fn spectral_bound_chain(
    evaluator: &ClosedFormEvaluator,
    report: &ScheduleReport,
) -> Result<Vec<SpectralBoundCheck>> {
    if report.regime != Regime::Spectral || !report.alpha_admissible {
        return Err(Error::NotAdmissible(
            "bound chain needs an admissible spectral schedule".into(),
        ));
    }
    let target = evaluator.target();
    let sigma0 = evaluator
        .spectral_sigma0()
        .ok_or(Error::ModeMismatch { mode: evaluator.mode().name() })?;
    let rank = target.rank();
    let n = target.dim();
    let eps = report.epsilon;
    let mut out = Vec::with_capacity(rank);
    for iv in &report.intervals {
        let k = iv.k;
        let a_k = iv.lower;
        let b_k = report.sampling_upper(iv);
        let mut learned_ok = true;
        for l in 0..k {
            let v = evaluator.eval_sigma_spectral(l, a_k)?;
            learned_ok &= v >= target.sigma(l) - eps;
        }
        let mut pending_ok = true;
        for l in k..rank {
            let v = evaluator.eval_sigma_spectral(l, b_k)?;
            pending_ok &= v > 0.0 && v <= eps;
        }
        let mut null_ok = true;
        for l in rank..n {
            let bound = report.alpha * sigma0[l];
            for t in [a_k, b_k] {
                let v = evaluator.eval_sigma_spectral(l, t)?;
                null_ok &= v <= bound && bound <= eps;
            }
        }
        out.push(SpectralBoundCheck {
            k,
            learned_ok,
            pending_ok,
            null_ok,
        });
    }
    Ok(out)
}
