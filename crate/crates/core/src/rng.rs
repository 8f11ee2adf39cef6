//! Seeded generators for test fixtures and random initialization shapes.

use nalgebra::DMatrix;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Matrix with i.i.d. standard normal entries, filled row by row from a
/// ChaCha8 stream seeded with `seed`.
pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(StandardNormal.sample(&mut rng));
    }
    DMatrix::from_row_slice(rows, cols, &data)
}

/// Haar-distributed orthogonal matrix: QR of a seeded Gaussian matrix with
/// the signs of R's diagonal folded into Q.
pub fn haar_orthogonal(n: usize, seed: u64) -> DMatrix<f64> {
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let qr = gaussian_matrix(n, n, seed).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}
