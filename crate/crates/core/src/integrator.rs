//! Adaptive Dormand–Prince 5(4) integration of the factor flow
//! `U̇ = (Y − UUᵀ)U` and the product flow `Ẇ = WY + YW − 2W²`.
//!
//! This is the independent check on the closed-form paths. Steps are chosen by
//! a PI controller on the embedded error estimate, and shortened where needed so
//! that every requested grid time is hit by a step endpoint. Interpolating
//! inside long steps would add an error the tolerances do not control.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::symmetrize;
use crate::riccati::check_grid;
use crate::spectral::TargetMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    UFlow,
    WFlow,
}

#[derive(Debug, Clone, Copy)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    pub flow: Flow,
}

impl IntegratorConfig {
    pub fn u_flow() -> Self {
        Self {
            flow: Flow::UFlow,
            ..Self::w_flow()
        }
    }

    pub fn w_flow() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            max_steps: 10_000_000,
            flow: Flow::WFlow,
        }
    }

    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    fn validate(&self, expected: Flow) -> Result<()> {
        let in_unit = |x: f64| x > 0.0 && x < 1.0;
        if !in_unit(self.rel_tol) || !in_unit(self.abs_tol) || self.max_steps == 0 {
            return Err(Error::InvalidArgument(format!(
                "integrator tolerances must lie in (0, 1) and max_steps >= 1: {self:?}"
            )));
        }
        if self.flow != expected {
            return Err(Error::InvalidArgument(format!(
                "integrator configured for {:?}, called for {expected:?}",
                self.flow
            )));
        }
        Ok(())
    }
}

/// Integrates the factor flow from `U(0) = u0` and reports `U(t)` on `grid`.
pub fn integrate_u(
    target: &TargetMatrix,
    u0: &DMatrix<f64>,
    grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<(f64, DMatrix<f64>)>> {
    cfg.validate(Flow::UFlow)?;
    let n = target.dim();
    if u0.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: u0.nrows(),
        });
    }
    let r = u0.ncols();
    let y = target.matrix().clone();
    let rhs = move |state: &DVector<f64>, out: &mut DVector<f64>| {
        let u = DMatrix::from_column_slice(n, r, state.as_slice());
        let residual = &y - &u * u.transpose();
        out.copy_from_slice((residual * u).as_slice());
    };
    let y0 = DVector::from_column_slice(u0.as_slice());
    let states = dopri5(rhs, y0, grid, cfg, |_| {})?;
    Ok(states
        .into_iter()
        .map(|(t, s)| (t, DMatrix::from_column_slice(n, r, s.as_slice())))
        .collect())
}

/// Integrates the product flow from `W(0) = w0`, symmetrizing the state after
/// every accepted step.
pub fn integrate_w(
    target: &TargetMatrix,
    w0: &DMatrix<f64>,
    grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<(f64, DMatrix<f64>)>> {
    cfg.validate(Flow::WFlow)?;
    let n = target.dim();
    if w0.nrows() != n || w0.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if w0.nrows() != n { w0.nrows() } else { w0.ncols() },
        });
    }
    let y = target.matrix().clone();
    let rhs = move |state: &DVector<f64>, out: &mut DVector<f64>| {
        let w = DMatrix::from_column_slice(n, n, state.as_slice());
        let wy = &w * &y;
        let dw = &wy + wy.transpose() - (&w * &w) * 2.0;
        out.copy_from_slice(dw.as_slice());
    };
    let project = move |state: &mut DVector<f64>| {
        let w = DMatrix::from_column_slice(n, n, state.as_slice());
        state.copy_from_slice(symmetrize(&w).as_slice());
    };
    let y0 = DVector::from_column_slice(symmetrize(w0).as_slice());
    let states = dopri5(rhs, y0, grid, cfg, project)?;
    Ok(states
        .into_iter()
        .map(|(t, s)| (t, DMatrix::from_column_slice(n, n, s.as_slice())))
        .collect())
}

// Dormand–Prince 5(4) tableau. Both flows are autonomous, so the nodes c_i
// are not needed.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b − b̂ (fifth minus fourth order weights)
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;
const PI_ALPHA: f64 = 0.7 / 5.0;
const PI_BETA: f64 = 0.4 / 5.0;

fn error_norm(err: &DVector<f64>, y0: &DVector<f64>, y1: &DVector<f64>, cfg: &IntegratorConfig) -> f64 {
    let n = err.len().max(1) as f64;
    let sum: f64 = err
        .iter()
        .zip(y0.iter().zip(y1.iter()))
        .map(|(e, (a, b))| {
            let sc = cfg.abs_tol + cfg.rel_tol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

fn initial_step<F>(rhs: &F, y0: &DVector<f64>, f0: &DVector<f64>, cfg: &IntegratorConfig) -> f64
where
    F: Fn(&DVector<f64>, &mut DVector<f64>),
{
    let scale = |v: &DVector<f64>| {
        let n = v.len().max(1) as f64;
        (v.iter()
            .zip(y0.iter())
            .map(|(x, y)| (x / (cfg.abs_tol + cfg.rel_tol * y.abs())).powi(2))
            .sum::<f64>()
            / n)
            .sqrt()
    };
    let d0 = scale(y0);
    let d1 = scale(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1 = y0 + f0 * h0;
    let mut f1 = DVector::zeros(y0.len());
    rhs(&y1, &mut f1);
    let d2 = scale(&(&f1 - f0)) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    (100.0 * h0).min(h1)
}

fn dopri5<F, P>(
    rhs: F,
    y0: DVector<f64>,
    grid: &[f64],
    cfg: &IntegratorConfig,
    project: P,
) -> Result<Vec<(f64, DVector<f64>)>>
where
    F: Fn(&DVector<f64>, &mut DVector<f64>),
    P: Fn(&mut DVector<f64>),
{
    check_grid(grid)?;
    let dim = y0.len();
    let mut out = Vec::with_capacity(grid.len());
    let mut next = 0;
    while next < grid.len() && grid[next] == 0.0 {
        out.push((0.0, y0.clone()));
        next += 1;
    }
    if next == grid.len() {
        return Ok(out);
    }
    let t_end = grid[grid.len() - 1];

    let mut t = 0.0;
    let mut y = y0;
    let mut f = DVector::zeros(dim);
    rhs(&y, &mut f);
    let mut h = initial_step(&rhs, &y, &f, cfg).min(t_end);
    let mut err_prev: f64 = 1e-4;
    let mut steps = 0usize;

    let mut k2 = DVector::zeros(dim);
    let mut k3 = DVector::zeros(dim);
    let mut k4 = DVector::zeros(dim);
    let mut k5 = DVector::zeros(dim);
    let mut k6 = DVector::zeros(dim);
    let mut k7 = DVector::zeros(dim);

    while next < grid.len() {
        if steps >= cfg.max_steps {
            return Err(Error::StepLimitExceeded(cfg.max_steps));
        }
        steps += 1;
        // Land exactly on the next output time; the controller resumes from
        // the unclipped proposal afterwards.
        let h_free = h;
        let to_next = grid[next] - t;
        let clipped = h >= to_next;
        if clipped {
            h = to_next;
        }
        let k1 = &f;
        rhs(&(&y + k1 * (h * A21)), &mut k2);
        rhs(&(&y + (k1 * A31 + &k2 * A32) * h), &mut k3);
        rhs(&(&y + (k1 * A41 + &k2 * A42 + &k3 * A43) * h), &mut k4);
        rhs(&(&y + (k1 * A51 + &k2 * A52 + &k3 * A53 + &k4 * A54) * h), &mut k5);
        rhs(
            &(&y + (k1 * A61 + &k2 * A62 + &k3 * A63 + &k4 * A64 + &k5 * A65) * h),
            &mut k6,
        );
        let mut y_new = &y + (k1 * B1 + &k3 * B3 + &k4 * B4 + &k5 * B5 + &k6 * B6) * h;
        rhs(&y_new, &mut k7);
        let err = (k1 * E1 + &k3 * E3 + &k4 * E4 + &k5 * E5 + &k6 * E6 + &k7 * E7) * h;
        let en = error_norm(&err, &y, &y_new, cfg);
        if !en.is_finite() || y_new.iter().any(|x| !x.is_finite()) {
            if h < 1e-14 * t.max(1.0) {
                return Err(Error::NonFinite("integrator state"));
            }
            h *= MIN_FACTOR;
            continue;
        }
        if en <= 1.0 {
            project(&mut y_new);
            let t_new = if clipped { grid[next] } else { t + h };
            if clipped {
                out.push((t_new, y_new.clone()));
                next += 1;
            }
            let factor = if en == 0.0 {
                MAX_FACTOR
            } else {
                (SAFETY * en.powf(-PI_ALPHA) * err_prev.powf(PI_BETA)).clamp(MIN_FACTOR, MAX_FACTOR)
            };
            err_prev = en.max(1e-4);
            t = t_new;
            y = y_new;
            // k7 was evaluated at the unprojected state; projection only
            // removes round-off, so reuse is first-same-as-last safe.
            std::mem::swap(&mut f, &mut k7);
            h = if clipped { (h * factor).max(h_free) } else { h * factor };
        } else {
            let factor = (SAFETY * en.powf(-1.0 / 5.0)).clamp(MIN_FACTOR, 1.0);
            h *= factor;
        }
        if h <= 0.0 || !h.is_finite() {
            return Err(Error::NonFinite("integrator step size"));
        }
    }
    Ok(out)
}
