//! C ABI over `gflow`: build a target, attach an initialization, evaluate the
//! closed-form trajectory and read off the incremental-learning schedule.
//!
//! Every entry point returns a [`GflowStatus`]. On failure a human-readable
//! message is stored per thread and can be read with
//! [`gflow_last_error_message`]. Matrices cross the boundary as column-major
//! `double` buffers. Handles are opaque; free them with the matching
//! `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use gflow::schedule::ScheduleReport;
use gflow::{ClosedFormEvaluator, Error, Initialization, TargetMatrix};
use nalgebra::DMatrix;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GflowStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    NotPsd = 4,
    Singular = 5,
    OutOfRange = 6,
    ModeMismatch = 7,
    NotAdmissible = 8,
    Internal = 9,
    Panic = 10,
}

/// Target matrix handle.
pub struct GflowTarget {
    inner: Arc<TargetMatrix>,
}

/// Closed-form evaluator handle (target plus initialization).
pub struct GflowEvaluator {
    inner: ClosedFormEvaluator,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let msg = CString::new(msg).unwrap_or_else(|_| c"error message contained a NUL byte".to_owned());
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

struct Failure(GflowStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::NotPsd { .. } => GflowStatus::NotPsd,
            Error::SingularSystem(_) | Error::RankDeficientInit => GflowStatus::Singular,
            Error::IndexOutOfRange { .. } | Error::OverflowGuard { .. } => GflowStatus::OutOfRange,
            Error::ModeMismatch { .. } => GflowStatus::ModeMismatch,
            Error::NotAdmissible(_) | Error::NoAdmissibleAlpha | Error::EpsilonTooLarge { .. } => {
                GflowStatus::NotAdmissible
            }
            Error::NotSquare { .. }
            | Error::NonFinite(_)
            | Error::SpectrumNotSorted(_)
            | Error::NegativeEntry(_)
            | Error::DimensionMismatch { .. }
            | Error::ZeroModeWeight(_)
            | Error::LevelUnreachable { .. }
            | Error::InvalidArgument(_) => GflowStatus::InvalidArgument,
            _ => GflowStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(GflowStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, translating errors and panics into a status code.
fn guarded(f: impl FnOnce() -> Result<(), Failure>) -> GflowStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            GflowStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            GflowStatus::Panic
        }
    }
}

/// # Safety
/// `data` must be null or point to `len` readable doubles.
unsafe fn slice<'a>(data: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

/// # Safety
/// `data` must be null or point to `len` writable doubles.
unsafe fn slice_mut<'a>(data: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(data, len))
}

/// Message for the most recent failure on this thread, or null if the last
/// call succeeded. Valid until the next `gflow_*` call on the same thread.
#[no_mangle]
pub extern "C" fn gflow_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |m| m.as_ptr()))
}

/// Builds `Y = Q diag(spectrum) Qᵀ`. `Q` is the identity when `use_seed` is
/// false, otherwise a random orthogonal matrix drawn from `rotation_seed`.
/// The spectrum must be nonnegative and nonincreasing.
///
/// # Safety
/// `spectrum` must point to `n` doubles; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gflow_target_from_spectrum(
    spectrum: *const f64,
    n: usize,
    use_seed: bool,
    rotation_seed: u64,
    out: *mut *mut GflowTarget,
) -> GflowStatus {
    guarded(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if n == 0 {
            return Err(Failure(GflowStatus::InvalidArgument, "n must be positive".into()));
        }
        let spectrum = slice(spectrum, n, "spectrum")?;
        let target = TargetMatrix::synthesize(spectrum, use_seed.then_some(rotation_seed))?;
        *out = Box::into_raw(Box::new(GflowTarget {
            inner: Arc::new(target),
        }));
        Ok(())
    })
}

/// Builds a target from a symmetric PSD `n×n` matrix (column-major).
///
/// # Safety
/// `data` must point to `n*n` doubles; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gflow_target_from_matrix(
    data: *const f64,
    n: usize,
    out: *mut *mut GflowTarget,
) -> GflowStatus {
    guarded(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if n == 0 {
            return Err(Failure(GflowStatus::InvalidArgument, "n must be positive".into()));
        }
        let values = slice(data, n * n, "data")?;
        let target = TargetMatrix::with_default_threshold(&DMatrix::from_column_slice(n, n, values))?;
        *out = Box::into_raw(Box::new(GflowTarget {
            inner: Arc::new(target),
        }));
        Ok(())
    })
}

/// Dimension `n` of the target, or 0 for a null handle.
///
/// # Safety
/// `target` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gflow_target_dim(target: *const GflowTarget) -> usize {
    target.as_ref().map_or(0, |t| t.inner.dim())
}

/// Numerical rank `K` of the target, or 0 for a null handle.
///
/// # Safety
/// `target` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gflow_target_rank(target: *const GflowTarget) -> usize {
    target.as_ref().map_or(0, |t| t.inner.rank())
}

/// Writes the eigenvalues of the target, nonincreasing, into `out[0..n]`.
///
/// # Safety
/// `target` must be a live handle; `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gflow_target_eigenvalues(
    target: *const GflowTarget,
    out: *mut f64,
    len: usize,
) -> GflowStatus {
    guarded(|| {
        let target = target.as_ref().ok_or_else(|| null("target"))?;
        let n = target.inner.dim();
        if len < n {
            return Err(Failure(GflowStatus::BufferTooSmall, format!("need {n} doubles, got {len}")));
        }
        let out = slice_mut(out, n, "out")?;
        for (i, v) in out.iter_mut().enumerate() {
            *v = target.inner.sigma(i);
        }
        Ok(())
    })
}

/// # Safety
/// `target` must be null or a handle from `gflow_target_from_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gflow_target_free(target: *mut GflowTarget) {
    if !target.is_null() {
        drop(Box::from_raw(target));
    }
}

/// Creates an evaluator for `U(0) = √α · shape`, where `shape` is an
/// `n×m` column-major matrix and `n` is the target dimension. The evaluator
/// keeps its own reference to the target; the target handle may be freed
/// afterwards.
///
/// # Safety
/// `target` must be a live handle; `shape` must point to `n*m` doubles;
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gflow_evaluator_new(
    target: *const GflowTarget,
    shape: *const f64,
    m: usize,
    alpha: f64,
    out: *mut *mut GflowEvaluator,
) -> GflowStatus {
    guarded(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let target = target.as_ref().ok_or_else(|| null("target"))?;
        let n = target.inner.dim();
        if m == 0 {
            return Err(Failure(GflowStatus::InvalidArgument, "m must be positive".into()));
        }
        let values = slice(shape, n * m, "shape")?;
        let shape = DMatrix::from_column_slice(n, m, values);
        let init = Initialization::new(&shape, alpha, &target.inner, None)?;
        let inner = ClosedFormEvaluator::new(target.inner.clone(), Arc::new(init))?;
        *out = Box::into_raw(Box::new(GflowEvaluator { inner }));
        Ok(())
    })
}

/// Writes `W(t) = U(t)U(t)ᵀ` (column-major `n×n`) into `out`.
///
/// # Safety
/// `evaluator` must be a live handle; `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gflow_evaluator_eval_w(
    evaluator: *const GflowEvaluator,
    t: f64,
    out: *mut f64,
    len: usize,
) -> GflowStatus {
    guarded(|| {
        let ev = evaluator.as_ref().ok_or_else(|| null("evaluator"))?;
        let n = ev.inner.target().dim();
        if len < n * n {
            return Err(Failure(
                GflowStatus::BufferTooSmall,
                format!("need {} doubles, got {len}", n * n),
            ));
        }
        let out = slice_mut(out, n * n, "out")?;
        out.copy_from_slice(ev.inner.eval_w(t)?.as_slice());
        Ok(())
    })
}

/// Mode value `σ_i(t)` for an initialization aligned with the target's
/// eigenvectors (0-based `index`). Returns `GFLOW_STATUS_MODE_MISMATCH` for
/// other initializations.
///
/// # Safety
/// `evaluator` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gflow_evaluator_eval_sigma(
    evaluator: *const GflowEvaluator,
    index: usize,
    t: f64,
    out: *mut f64,
) -> GflowStatus {
    guarded(|| {
        let ev = evaluator.as_ref().ok_or_else(|| null("evaluator"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ev.inner.eval_sigma_spectral(index, t)?;
        Ok(())
    })
}

/// Computes the schedule at tolerance `epsilon`. Interval `k` (1-based) is
/// written to `lower[k-1]`, `upper[k-1]`; the last upper endpoint is
/// `+INFINITY`. `*count` receives `K`, and `*admissible` whether `α` meets
/// the schedule's conditions (intervals are written either way).
///
/// # Safety
/// `evaluator` must be a live handle; `lower` and `upper` must point to
/// `capacity` doubles; `count` and `admissible` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn gflow_evaluator_schedule(
    evaluator: *const GflowEvaluator,
    epsilon: f64,
    lower: *mut f64,
    upper: *mut f64,
    capacity: usize,
    count: *mut usize,
    admissible: *mut bool,
) -> GflowStatus {
    guarded(|| {
        let ev = evaluator.as_ref().ok_or_else(|| null("evaluator"))?;
        if count.is_null() {
            return Err(null("count"));
        }
        if admissible.is_null() {
            return Err(null("admissible"));
        }
        let report = ScheduleReport::for_evaluator(&ev.inner, epsilon)?;
        let k = report.intervals.len();
        *count = k;
        *admissible = report.alpha_admissible;
        if capacity < k {
            return Err(Failure(GflowStatus::BufferTooSmall, format!("need {k} intervals, got {capacity}")));
        }
        let lower = slice_mut(lower, k, "lower")?;
        let upper = slice_mut(upper, k, "upper")?;
        for (i, iv) in report.intervals.iter().enumerate() {
            lower[i] = iv.lower;
            upper[i] = iv.upper;
        }
        Ok(())
    })
}

/// # Safety
/// `evaluator` must be null or a handle from [`gflow_evaluator_new`] not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn gflow_evaluator_free(evaluator: *mut GflowEvaluator) {
    if !evaluator.is_null() {
        drop(Box::from_raw(evaluator));
    }
}
