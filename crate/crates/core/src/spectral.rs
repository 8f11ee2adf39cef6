//! The PSD target matrix, its sorted eigendecomposition, and best rank-k
//! truncations.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{sorted_symmetric_eigen, sym_spectral_norm, symmetrize};
use crate::rng::haar_orthogonal;

/// Default rank threshold: `1e-10 * max(1, ||Y||₂)`.
pub fn default_zero_threshold(y: &DMatrix<f64>) -> f64 {
    1e-10 * sym_spectral_norm(y).max(1.0)
}

/// A symmetric PSD target `Y = Φ diag(σ) Φᵀ` with eigenvalues sorted in
/// nonincreasing order. Immutable after construction.
#[derive(Debug, Clone)]
pub struct TargetMatrix {
    matrix: DMatrix<f64>,
    eigvecs: DMatrix<f64>,
    eigvals: DVector<f64>,
    rank: usize,
    zero_threshold: f64,
}

impl TargetMatrix {
    /// Symmetrizes `matrix`, decomposes it, and clamps eigenvalues within the
    /// threshold of zero.
    pub fn new(matrix: &DMatrix<f64>, zero_threshold: f64) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::NotSquare {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
            });
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("target matrix"));
        }
        if !(zero_threshold >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "zero_threshold must be nonnegative, got {zero_threshold}"
            )));
        }
        let y = symmetrize(matrix);
        let (mut eigvals, eigvecs) = sorted_symmetric_eigen(&y);
        if let Some(&smallest) = eigvals.as_slice().last() {
            if smallest < -zero_threshold {
                return Err(Error::NotPsd {
                    eigenvalue: smallest,
                    threshold: zero_threshold,
                });
            }
        }
        let mut rank = 0;
        for v in eigvals.iter_mut() {
            if *v > zero_threshold {
                rank += 1;
            } else {
                *v = 0.0;
            }
        }
        Ok(Self {
            matrix: y,
            eigvecs,
            eigvals,
            rank,
            zero_threshold,
        })
    }

    /// [`TargetMatrix::new`] with [`default_zero_threshold`].
    pub fn with_default_threshold(matrix: &DMatrix<f64>) -> Result<Self> {
        let thr = if matrix.is_square() && matrix.iter().all(|x| x.is_finite()) {
            default_zero_threshold(&symmetrize(matrix))
        } else {
            0.0
        };
        Self::new(matrix, thr)
    }

    /// Builds `Y = Φ diag(spectrum) Φᵀ`, with `Φ = I` when `rotation_seed` is
    /// `None` and a seeded Haar orthogonal matrix otherwise.
    pub fn synthesize(spectrum: &[f64], rotation_seed: Option<u64>) -> Result<Self> {
        for (i, &s) in spectrum.iter().enumerate() {
            if !s.is_finite() {
                return Err(Error::NonFinite("spectrum"));
            }
            if s < 0.0 {
                return Err(Error::NegativeEntry(i));
            }
            if i > 0 && s > spectrum[i - 1] {
                return Err(Error::SpectrumNotSorted(i));
            }
        }
        let n = spectrum.len();
        let phi = match rotation_seed {
            None => DMatrix::identity(n, n),
            Some(seed) => haar_orthogonal(n, seed),
        };
        let eigvals = DVector::from_column_slice(spectrum);
        let y = symmetrize(&(&phi * DMatrix::from_diagonal(&eigvals) * phi.transpose()));
        let zero_threshold = 1e-10 * spectrum.first().copied().unwrap_or(0.0).max(1.0);
        let rank = spectrum.iter().filter(|&&s| s > zero_threshold).count();
        Ok(Self {
            matrix: y,
            eigvecs: phi,
            eigvals,
            rank,
            zero_threshold,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// The symmetrized target `Y`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `Φ`, columns ordered by descending eigenvalue.
    pub fn eigvecs(&self) -> &DMatrix<f64> {
        &self.eigvecs
    }

    pub fn eigvals(&self) -> &DVector<f64> {
        &self.eigvals
    }

    /// Number of eigenvalues above the zero threshold.
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn zero_threshold(&self) -> f64 {
        self.zero_threshold
    }

    /// Eigenvalue `i` (zero-based); zero for modes at or past the rank.
    pub fn sigma(&self, i: usize) -> f64 {
        if i < self.rank {
            self.eigvals[i]
        } else {
            0.0
        }
    }

    /// Rates `s_i = σ_i` for `i < K` and `0` beyond.
    pub fn rates(&self) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| self.sigma(i))
    }

    /// Rotates a matrix into the eigenbasis: `Φᵀ A Φ`.
    pub fn to_eigenbasis(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        self.eigvecs.transpose() * a * &self.eigvecs
    }

    /// Rotates back: `Φ A Φᵀ`.
    pub fn from_eigenbasis(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        &self.eigvecs * a * self.eigvecs.transpose()
    }

    /// Best rank-k approximation `Ŷ_k`; `k ≥ K` returns `Ŷ_K`.
    pub fn best_rank_k(&self, k: usize) -> Result<RankKTruncation> {
        let n = self.dim();
        if k > n {
            return Err(Error::IndexOutOfRange { index: k, max: n });
        }
        let k = k.min(self.rank);
        let d = DVector::from_fn(n, |i, _| if i < k { self.eigvals[i] } else { 0.0 });
        let matrix = symmetrize(&self.from_eigenbasis(&DMatrix::from_diagonal(&d)));
        Ok(RankKTruncation { k, matrix })
    }
}

/// `Ŷ_k = Φ diag(σ₁, …, σ_k, 0, …, 0) Φᵀ`.
#[derive(Debug, Clone)]
pub struct RankKTruncation {
    pub k: usize,
    pub matrix: DMatrix<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sorted_symmetric_eigenvalues;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(v))
    }

    #[test]
    fn identity_has_full_rank() {
        let t = TargetMatrix::new(&DMatrix::identity(3, 3), 1e-10).unwrap();
        assert_eq!(t.rank(), 3);
        assert_eq!(t.eigvals().as_slice(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn diagonal_input_sorted_and_ranked() {
        let t = TargetMatrix::new(&diag(&[4.0, 1.0, 0.0]), 1e-10).unwrap();
        assert_eq!(t.rank(), 2);
        assert_eq!(t.eigvals().as_slice(), &[4.0, 1.0, 0.0]);
        let phi = t.eigvecs();
        for i in 0..3 {
            assert!((phi[(i, i)].abs() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn reconstruction_of_random_gram_matrix() {
        let a = crate::rng::gaussian_matrix(5, 5, 42);
        let y = &a * a.transpose();
        let t = TargetMatrix::with_default_threshold(&y).unwrap();
        let phi = t.eigvecs();
        let orth = (phi.transpose() * phi - DMatrix::identity(5, 5)).norm();
        assert!(orth <= 1e-10 * 5.0);
        let rebuilt = t.from_eigenbasis(&DMatrix::from_diagonal(t.eigvals()));
        assert!((rebuilt - &y).norm() <= 1e-10 * (1.0 + y.norm()));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            TargetMatrix::new(&DMatrix::zeros(2, 3), 0.0),
            Err(Error::NotSquare { .. })
        ));
        assert!(matches!(
            TargetMatrix::new(&diag(&[1.0, -1.0]), 1e-10),
            Err(Error::NotPsd { .. })
        ));
        let mut m = DMatrix::identity(2, 2);
        m[(0, 1)] = f64::NAN;
        assert!(matches!(
            TargetMatrix::new(&m, 1e-10),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn tiny_negative_eigenvalue_is_clamped() {
        let t = TargetMatrix::new(&diag(&[2.0, -1e-12]), 1e-10).unwrap();
        assert_eq!(t.rank(), 1);
        assert_eq!(t.eigvals()[1], 0.0);
    }

    #[test]
    fn synthesize_cases() {
        let t = TargetMatrix::synthesize(&[4.0, 1.0], None).unwrap();
        assert_eq!(t.matrix(), &diag(&[4.0, 1.0]));

        let t = TargetMatrix::synthesize(&[4.0, 1.0], Some(7)).unwrap();
        let ev = sorted_symmetric_eigenvalues(t.matrix());
        assert!((ev[0] - 4.0).abs() < 1e-12 && (ev[1] - 1.0).abs() < 1e-12);
        let phi = t.eigvecs();
        assert!((phi.transpose() * phi - DMatrix::identity(2, 2)).norm() < 1e-13);

        let t = TargetMatrix::synthesize(&[0.0, 0.0], Some(3)).unwrap();
        assert_eq!(t.rank(), 0);
        assert!(t.matrix().norm() == 0.0);

        assert!(matches!(
            TargetMatrix::synthesize(&[1.0, 2.0], None),
            Err(Error::SpectrumNotSorted(1))
        ));
        assert!(matches!(
            TargetMatrix::synthesize(&[1.0, -2.0], None),
            Err(Error::NegativeEntry(1))
        ));
    }

    #[test]
    fn truncation_examples() {
        let t = TargetMatrix::synthesize(&[4.0, 1.0], None).unwrap();
        assert_eq!(t.best_rank_k(1).unwrap().matrix, diag(&[4.0, 0.0]));
        assert_eq!(t.best_rank_k(2).unwrap().matrix, diag(&[4.0, 1.0]));
        assert!(matches!(
            t.best_rank_k(3),
            Err(Error::IndexOutOfRange { .. })
        ));

        let t = TargetMatrix::synthesize(&[3.0, 2.0, 1.0], Some(5)).unwrap();
        let y2 = t.best_rank_k(2).unwrap();
        let resid = sym_spectral_norm(&(t.matrix() - &y2.matrix));
        assert!((resid - 1.0).abs() < 1e-12, "{resid}");
    }

    #[test]
    fn truncation_clamps_to_rank() {
        let t = TargetMatrix::synthesize(&[2.0, 0.0, 0.0], Some(1)).unwrap();
        let tr = t.best_rank_k(3).unwrap();
        assert_eq!(tr.k, 1);
        assert!((tr.matrix - t.matrix()).norm() < 1e-12);
    }
}
