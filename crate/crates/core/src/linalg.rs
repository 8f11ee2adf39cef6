//! Dense helpers shared by the solver paths: sorted symmetric eigendecomposition,
//! norms, an equilibrated SPD inverse, and the plain-text matrix format.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Returns `(A + Aᵀ) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted in
/// nonincreasing order. Ties keep the solver's output order.
pub fn sorted_symmetric_eigen(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let eig = a.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Sorted (nonincreasing) eigenvalues of a symmetric matrix.
pub fn sorted_symmetric_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    let mut v: Vec<f64> = a.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(|x, y| y.total_cmp(x));
    v
}

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
pub fn sym_spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    symmetrize(a)
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Spectral norm of an arbitrary matrix (largest singular value).
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    a.singular_values().iter().fold(0.0_f64, |m, v| m.max(*v))
}

/// Inverse of a symmetric positive definite matrix whose diagonal may span
/// many orders of magnitude. The matrix is scaled to unit diagonal before the
/// Cholesky factorization, which keeps graded matrices of the form
/// `D V D + diag(g)` accurate; LU is the fallback when Cholesky fails.
pub fn spd_inverse_equilibrated(b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = b.nrows();
    if b.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("system matrix"));
    }
    let mut scale = DVector::zeros(n);
    for i in 0..n {
        let d = b[(i, i)];
        if d <= 0.0 || !d.is_finite() {
            return lu_inverse(b);
        }
        scale[i] = 1.0 / d.sqrt();
    }
    let mut scaled = DMatrix::from_fn(n, n, |i, j| b[(i, j)] * scale[i] * scale[j]);
    scaled = symmetrize(&scaled);
    let inner = match scaled.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => lu_inverse(&scaled)?,
    };
    let out = DMatrix::from_fn(n, n, |i, j| inner[(i, j)] * scale[i] * scale[j]);
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::SingularSystem("equilibrated inverse overflowed"));
    }
    Ok(symmetrize(&out))
}

fn lu_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let inv = a
        .clone()
        .lu()
        .try_inverse()
        .ok_or(Error::SingularSystem("LU pivot vanished"))?;
    if inv.iter().any(|x| !x.is_finite()) {
        return Err(Error::SingularSystem("LU inverse overflowed"));
    }
    Ok(inv)
}

/// Formats a float with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{x:.16e}")
}

/// Serializes a matrix: `"n m"` header line then one row per line.
pub fn format_matrix(a: &DMatrix<f64>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} {}", a.nrows(), a.ncols());
    for i in 0..a.nrows() {
        let row: Vec<String> = (0..a.ncols()).map(|j| fmt17(a[(i, j)])).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    s
}

/// Parses the matrix text format. `origin` is only used in error messages.
pub fn parse_matrix(text: &str, origin: &Path) -> Result<DMatrix<f64>> {
    let bad = |reason: String| Error::MatrixFormat {
        path: origin.to_path_buf(),
        reason,
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| bad(format!("header: {e}")))?;
    let [rows, cols] = dims[..] else {
        return Err(bad(format!("header must hold two integers, got {header:?}")));
    };
    let mut data = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        let line = lines
            .next()
            .ok_or_else(|| bad(format!("missing row {}", i + 1)))?;
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(format!("row {}: {e}", i + 1)))?;
        if row.len() != cols {
            return Err(bad(format!(
                "row {} has {} entries, expected {cols}",
                i + 1,
                row.len()
            )));
        }
        data.extend(row);
    }
    if lines.any(|l| !l.trim().is_empty()) {
        return Err(bad("trailing data after last row".into()));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix(&text, path)
}

pub fn write_matrix(path: &Path, a: &DMatrix<f64>) -> Result<()> {
    std::fs::write(path, format_matrix(a)).map_err(|e| Error::io(path, e))
}
