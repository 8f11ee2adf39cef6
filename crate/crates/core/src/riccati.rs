//! Closed-form evaluation of the flow `Ẇ = WY + YW − 2W²`.
//!
//! Every production path works with decaying exponentials only, so `W(t)` can
//! be evaluated arbitrarily deep into a plateau. The literal transcription of
//! the linear-system solution is kept as [`ClosedFormEvaluator::eval_w_lti`]
//! for cross-checking at moderate `t`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{sorted_symmetric_eigen, sorted_symmetric_eigenvalues, sym_spectral_norm, symmetrize};
use crate::spectral::TargetMatrix;

/// Shape `Ū₀`, scale `α`, and the derived quantities of `W(0) = α Ū₀Ū₀ᵀ`.
#[derive(Debug, Clone)]
pub struct Initialization {
    shape: DMatrix<f64>,
    scale: f64,
    w_tilde0: DMatrix<f64>,
    v: Option<DMatrix<f64>>,
    m_bound: Option<f64>,
    full_rank: bool,
    rank_tolerance: f64,
    // W̃₀ = F Fᵀ with F of full column rank; used by the Woodbury path.
    factor: DMatrix<f64>,
}

impl Initialization {
    /// `rank_tolerance = None` uses `1e-10 · ||W̃₀||₂`.
    pub fn new(
        shape: &DMatrix<f64>,
        scale: f64,
        target: &TargetMatrix,
        rank_tolerance: Option<f64>,
    ) -> Result<Self> {
        let n = target.dim();
        if shape.nrows() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: shape.nrows(),
            });
        }
        if shape.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("initialization shape"));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "initialization scale must be positive and finite, got {scale}"
            )));
        }
        let rotated = target.eigvecs().transpose() * shape;
        let w_tilde0 = symmetrize(&(&rotated * rotated.transpose()));
        let (lambda, q) = sorted_symmetric_eigen(&w_tilde0);
        let top = lambda.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let tol = rank_tolerance.unwrap_or(1e-10 * top);
        if !(tol >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "rank tolerance must be nonnegative, got {tol}"
            )));
        }
        let kept: Vec<usize> = (0..n).filter(|&i| lambda[i] > tol).collect();
        let full_rank = n > 0 && kept.len() == n;
        let mut factor = DMatrix::zeros(n, kept.len());
        for (col, &i) in kept.iter().enumerate() {
            factor.set_column(col, &(q.column(i) * lambda[i].sqrt()));
        }
        let (v, m_bound) = if full_rank {
            let inv = DVector::from_fn(n, |i, _| 1.0 / lambda[i]);
            let v = symmetrize(&(&q * DMatrix::from_diagonal(&inv) * q.transpose()));
            let m = (1.0 / lambda[n - 1]).max(lambda[0]);
            (Some(v), Some(m))
        } else {
            (None, None)
        };
        Ok(Self {
            shape: shape.clone(),
            scale,
            w_tilde0,
            v,
            m_bound,
            full_rank,
            rank_tolerance: tol,
            factor,
        })
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `W̃₀ = Φᵀ Ū₀Ū₀ᵀ Φ` at unit scale.
    pub fn w_tilde0(&self) -> &DMatrix<f64> {
        &self.w_tilde0
    }

    /// `V = W̃₀⁻¹` when it exists.
    pub fn v(&self) -> Option<&DMatrix<f64>> {
        self.v.as_ref()
    }

    /// `M = max(||V||₂, ||V⁻¹||₂)` when `V` exists.
    pub fn m_bound(&self) -> Option<f64> {
        self.m_bound
    }

    pub fn full_rank(&self) -> bool {
        self.full_rank
    }

    pub fn rank_tolerance(&self) -> f64 {
        self.rank_tolerance
    }

    /// Same shape at a different scale.
    pub fn with_scale(&self, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "initialization scale must be positive and finite, got {scale}"
            )));
        }
        Ok(Self {
            scale,
            ..self.clone()
        })
    }

    /// `W(0) = α Ū₀Ū₀ᵀ`.
    pub fn w0(&self) -> DMatrix<f64> {
        symmetrize(&(&self.shape * self.shape.transpose() * self.scale))
    }

    /// Whether `W̃₀` is diagonal to within `1e-10 · max(1, ||W̃₀||)`.
    pub fn is_spectral(&self) -> bool {
        let n = self.w_tilde0.nrows();
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += self.w_tilde0[(i, j)].powi(2);
                }
            }
        }
        off.sqrt() <= 1e-10 * self.w_tilde0.norm().max(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    GeneralFullRank,
    SpectralDiagonal,
    RankDeficient,
}

impl EvalMode {
    pub fn name(self) -> &'static str {
        match self {
            EvalMode::GeneralFullRank => "general_full_rank",
            EvalMode::SpectralDiagonal => "spectral_diagonal",
            EvalMode::RankDeficient => "rank_deficient",
        }
    }
}

/// Precomputed state for evaluating `W(t)` at any `t ≥ 0`.
#[derive(Debug, Clone)]
pub struct ClosedFormEvaluator {
    target: Arc<TargetMatrix>,
    init: Arc<Initialization>,
    mode: EvalMode,
    spectral_sigma0: Option<DVector<f64>>,
}

/// `(1 − e^{−2σt}) / σ` for `σ > 0`, `2t` for `σ = 0`.
pub(crate) fn decayed_gain(sigma: f64, t: f64) -> f64 {
    if sigma > 0.0 {
        -(-2.0 * sigma * t).exp_m1() / sigma
    } else {
        2.0 * t
    }
}

impl ClosedFormEvaluator {
    /// Picks the mode automatically: spectral when `W̃₀` is diagonal and
    /// full rank, general when full rank, rank-deficient otherwise.
    pub fn new(target: Arc<TargetMatrix>, init: Arc<Initialization>) -> Result<Self> {
        let mode = if init.full_rank() {
            if init.is_spectral() {
                EvalMode::SpectralDiagonal
            } else {
                EvalMode::GeneralFullRank
            }
        } else if init.is_spectral() {
            EvalMode::SpectralDiagonal
        } else {
            EvalMode::RankDeficient
        };
        Self::with_mode(target, init, mode)
    }

    pub fn with_mode(
        target: Arc<TargetMatrix>,
        init: Arc<Initialization>,
        mode: EvalMode,
    ) -> Result<Self> {
        if init.w_tilde0().nrows() != target.dim() {
            return Err(Error::DimensionMismatch {
                expected: target.dim(),
                got: init.w_tilde0().nrows(),
            });
        }
        let spectral_sigma0 = match mode {
            EvalMode::GeneralFullRank if !init.full_rank() => {
                return Err(Error::ModeMismatch { mode: mode.name() });
            }
            EvalMode::SpectralDiagonal => {
                if !init.is_spectral() {
                    return Err(Error::ModeMismatch { mode: mode.name() });
                }
                Some(init.w_tilde0().diagonal())
            }
            EvalMode::RankDeficient if init.full_rank() => {
                return Err(Error::ModeMismatch { mode: mode.name() });
            }
            _ => None,
        };
        Ok(Self {
            target,
            init,
            mode,
            spectral_sigma0,
        })
    }

    pub fn target(&self) -> &Arc<TargetMatrix> {
        &self.target
    }

    pub fn init(&self) -> &Arc<Initialization> {
        &self.init
    }

    pub fn mode(&self) -> EvalMode {
        self.mode
    }

    /// Diagonal of `W̃₀` in spectral mode.
    pub fn spectral_sigma0(&self) -> Option<&DVector<f64>> {
        self.spectral_sigma0.as_ref()
    }

    /// `W(t)`: the stable full-rank form when `W̃₀` is invertible, the
    /// Woodbury form otherwise.
    pub fn eval_w(&self, t: f64) -> Result<DMatrix<f64>> {
        check_time(t)?;
        if self.init.full_rank() {
            self.eval_w_general(t)
        } else {
            self.eval_w_rank_deficient(t)
        }
    }

    /// Full-rank path: `W(t) = α Φ B(t)⁻¹ Φᵀ` with
    /// `B_ij = V_ij e^{−(s_i+s_j)t} + α δ_ij g̃_i(t)`.
    pub fn eval_w_general(&self, t: f64) -> Result<DMatrix<f64>> {
        Ok(self.target.from_eigenbasis(&self.eval_w_tilde_general(t)?))
    }

    /// `Φᵀ W(t) Φ` via the stable full-rank form.
    pub fn eval_w_tilde_general(&self, t: f64) -> Result<DMatrix<f64>> {
        check_time(t)?;
        let v = self
            .init
            .v()
            .ok_or(Error::ModeMismatch { mode: self.mode.name() })?;
        let alpha = self.init.scale();
        let b = stable_core(v, &self.target.rates(), alpha, t);
        let inv = crate::linalg::spd_inverse_equilibrated(&b)?;
        Ok(symmetrize(&(inv * alpha)))
    }

    /// Scalar trajectory of mode `i` (zero-based) in spectral mode.
    pub fn eval_sigma_spectral(&self, i: usize, t: f64) -> Result<f64> {
        let sigma0 = self
            .spectral_sigma0
            .as_ref()
            .ok_or(Error::ModeMismatch { mode: self.mode.name() })?;
        let n = self.target.dim();
        if i >= n {
            return Err(Error::IndexOutOfRange {
                index: i,
                max: n.saturating_sub(1),
            });
        }
        check_time(t)?;
        Ok(spectral_mode_value(
            self.target.sigma(i),
            sigma0[i],
            self.init.scale(),
            t,
        ))
    }

    /// `W(t)` assembled from the scalar trajectories (spectral mode only).
    pub fn eval_w_spectral(&self, t: f64) -> Result<DMatrix<f64>> {
        let n = self.target.dim();
        let mut d = DVector::zeros(n);
        for i in 0..n {
            d[i] = self.eval_sigma_spectral(i, t)?;
        }
        Ok(symmetrize(
            &self.target.from_eigenbasis(&DMatrix::from_diagonal(&d)),
        ))
    }

    /// Woodbury path `α S F (I + α Fᵀ G F)⁻¹ Fᵀ S` with `W̃₀ = F Fᵀ`,
    /// evaluated through a column-pivoted QR of the row-scaled factor so that
    /// only decaying exponentials appear. Valid for any initialization.
    pub fn eval_w_rank_deficient(&self, t: f64) -> Result<DMatrix<f64>> {
        Ok(self.target.from_eigenbasis(&self.eval_w_tilde_woodbury(t)?))
    }

    fn eval_w_tilde_woodbury(&self, t: f64) -> Result<DMatrix<f64>> {
        check_time(t)?;
        let n = self.target.dim();
        let f = &self.init.factor;
        let r = f.ncols();
        if r == 0 {
            return Ok(DMatrix::zeros(n, n));
        }
        let alpha = self.init.scale();
        let rates = self.target.rates();
        let s_max = rates.iter().fold(0.0_f64, |m, v| m.max(*v));
        // Ẑ = e^{−s_max t} S F
        let scaled = DMatrix::from_fn(n, r, |i, j| ((rates[i] - s_max) * t).exp() * f[(i, j)]);
        let qr = scaled.col_piv_qr();
        let q = qr.q();
        let rmat = qr.r();
        // R = D R̄ with unit-diagonal R̄; E = e^{−s_max t} D⁻¹.
        let mut e = DVector::zeros(r);
        let mut rbar = rmat.clone();
        for i in 0..r {
            let d = rmat[(i, i)];
            if d == 0.0 {
                return Err(Error::SingularSystem("Woodbury factor lost rank"));
            }
            e[i] = d.signum() * (-s_max * t - d.abs().ln()).exp();
            for j in 0..r {
                rbar[(i, j)] /= d;
            }
        }
        if e.iter().any(|x| !x.is_finite()) {
            return Err(Error::SingularSystem("Woodbury scaling overflowed"));
        }
        let rbar_inv = rbar
            .solve_upper_triangular(&DMatrix::identity(r, r))
            .ok_or(Error::SingularSystem("triangular factor"))?;
        let nmat = rbar_inv.transpose() * &rbar_inv;
        let gains = DVector::from_fn(n, |i, _| decayed_gain(rates[i], t));
        let a = q.transpose() * DMatrix::from_diagonal(&gains) * &q;
        let core = DMatrix::from_fn(r, r, |i, j| e[i] * nmat[(i, j)] * e[j] + alpha * a[(i, j)]);
        let core_inv = crate::linalg::spd_inverse_equilibrated(&symmetrize(&core))?;
        Ok(symmetrize(&(&q * core_inv * q.transpose() * alpha)))
    }

    /// Largest `t` accepted by [`Self::eval_w_lti`]: `300 / (2 σ₁)`.
    pub fn lti_guard(&self) -> f64 {
        let s1 = self.target.sigma(0);
        if s1 > 0.0 {
            300.0 / (2.0 * s1)
        } else {
            f64::INFINITY
        }
    }

    /// Literal linear-system form `Φ X₂(t) X₁(t)⁻¹ Φᵀ` with
    /// `X₁ = S⁻¹(I + G W̃(0))`, `X₂ = S W̃(0)`. Cross-check only.
    pub fn eval_w_lti(&self, t: f64) -> Result<DMatrix<f64>> {
        check_time(t)?;
        let t_max = self.lti_guard();
        if t > t_max {
            return Err(Error::OverflowGuard { t, t_max });
        }
        let n = self.target.dim();
        let rates = self.target.rates();
        let p0 = self.init.w_tilde0() * self.init.scale();
        let s = DVector::from_fn(n, |i, _| (rates[i] * t).exp());
        let g = DVector::from_fn(n, |i, _| {
            if rates[i] > 0.0 {
                (2.0 * rates[i] * t).exp_m1() / rates[i]
            } else {
                2.0 * t
            }
        });
        let mut x1 = DMatrix::from_diagonal(&g) * &p0;
        for i in 0..n {
            x1[(i, i)] += 1.0;
        }
        for i in 0..n {
            x1.row_mut(i).scale_mut(1.0 / s[i]);
        }
        let x2 = DMatrix::from_diagonal(&s) * &p0;
        // P = X₂ X₁⁻¹  ⇔  X₁ᵀ Pᵀ = X₂ᵀ
        let pt = x1
            .transpose()
            .lu()
            .solve(&x2.transpose())
            .ok_or(Error::SingularSystem("X1 in linear-system form"))?;
        if pt.iter().any(|x| !x.is_finite()) {
            return Err(Error::SingularSystem("X1 in linear-system form"));
        }
        Ok(symmetrize(&self.target.from_eigenbasis(&pt.transpose())))
    }

    /// `Φᵀ W(t) Φ` from whichever path [`Self::eval_w`] uses.
    pub fn eval_w_tilde(&self, t: f64) -> Result<DMatrix<f64>> {
        if self.init.full_rank() {
            self.eval_w_tilde_general(t)
        } else {
            self.eval_w_tilde_woodbury(t)
        }
    }

    /// Evaluates a strictly increasing grid, in parallel.
    pub fn trajectory(&self, grid: &[f64]) -> Result<Vec<TrajectorySample>> {
        check_grid(grid)?;
        let truncations: Vec<DMatrix<f64>> = (0..=self.target.rank())
            .map(|k| self.target.best_rank_k(k).map(|tr| tr.matrix))
            .collect::<Result<_>>()?;
        grid.par_iter()
            .map(|&t| {
                let w = self.eval_w(t)?;
                Ok(TrajectorySample::from_w(t, w, self.target.matrix(), &truncations))
            })
            .collect()
    }
}

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("t must be finite and nonnegative, got {t}")))
    }
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<()> {
    for (i, &t) in grid.iter().enumerate() {
        check_time(t)?;
        if i > 0 && t <= grid[i - 1] {
            return Err(Error::InvalidArgument(format!(
                "grid must be strictly increasing (index {i})"
            )));
        }
    }
    Ok(())
}

/// `B(t) = S⁻¹ V S⁻¹ + α S⁻¹ G S⁻¹`, assembled entrywise.
pub(crate) fn stable_core(v: &DMatrix<f64>, rates: &DVector<f64>, alpha: f64, t: f64) -> DMatrix<f64> {
    let n = v.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        let mut b = v[(i, j)] * (-(rates[i] + rates[j]) * t).exp();
        if i == j {
            b += alpha * decayed_gain(rates[i], t);
        }
        b
    })
}

/// Scalar closed form in decayed form. `sigma_y = 0` gives
/// `α σ₀ / (1 + 2 α σ₀ t)`.
pub fn spectral_mode_value(sigma_y: f64, sigma0: f64, alpha: f64, t: f64) -> f64 {
    if sigma0 == 0.0 {
        return 0.0;
    }
    if sigma_y > 0.0 {
        let decay = (-2.0 * sigma_y * t).exp();
        sigma_y * sigma0 / (sigma_y * decay / alpha - sigma0 * (-2.0 * sigma_y * t).exp_m1())
    } else {
        alpha * sigma0 / (1.0 + 2.0 * alpha * sigma0 * t)
    }
}

/// One grid point of a trajectory.
#[derive(Debug, Clone)]
pub struct TrajectorySample {
    pub t: f64,
    pub w: DMatrix<f64>,
    /// Eigenvalues of `W(t)`, nonincreasing.
    pub eigvals: Vec<f64>,
    /// `¼ ||Y − W(t)||²_F`.
    pub loss: f64,
    /// `||W(t) − Ŷ_k||₂` for `k = 0..=K`.
    pub distances: Vec<f64>,
}

impl TrajectorySample {
    pub fn from_w(t: f64, w: DMatrix<f64>, y: &DMatrix<f64>, truncations: &[DMatrix<f64>]) -> Self {
        let eigvals = sorted_symmetric_eigenvalues(&w);
        let loss = 0.25 * (y - &w).norm_squared();
        let distances = truncations
            .iter()
            .map(|yk| sym_spectral_norm(&(&w - yk)))
            .collect();
        Self {
            t,
            w,
            eigvals,
            loss,
            distances,
        }
    }
}
