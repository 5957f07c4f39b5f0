//! Linear operators and the small dense helpers shared by the metric and
//! prox layers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A bounded linear map `K: X -> Y` together with its adjoint.
pub trait LinearOperator: Send + Sync {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn apply(&self, x: &DVector<f64>) -> DVector<f64>;
    fn adjoint(&self, y: &DVector<f64>) -> DVector<f64>;
}

#[derive(Debug, Clone, Copy)]
pub struct IdentityOperator(pub usize);

impl LinearOperator for IdentityOperator {
    fn dim_in(&self) -> usize {
        self.0
    }
    fn dim_out(&self) -> usize {
        self.0
    }
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        x.clone()
    }
    fn adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        y.clone()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ZeroOperator {
    pub dim_in: usize,
    pub dim_out: usize,
}

impl LinearOperator for ZeroOperator {
    fn dim_in(&self) -> usize {
        self.dim_in
    }
    fn dim_out(&self) -> usize {
        self.dim_out
    }
    fn apply(&self, _x: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(self.dim_out)
    }
    fn adjoint(&self, _y: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(self.dim_in)
    }
}

/// Explicit matrix operator, mostly for tests and tiny problems.
#[derive(Debug, Clone)]
pub struct DenseOperator(pub DMatrix<f64>);

impl LinearOperator for DenseOperator {
    fn dim_in(&self) -> usize {
        self.0.ncols()
    }
    fn dim_out(&self) -> usize {
        self.0.nrows()
    }
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.0 * x
    }
    fn adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        self.0.tr_mul(y)
    }
}

/// Materializes an operator column by column.
pub fn densify(op: &dyn LinearOperator) -> DMatrix<f64> {
    let n = op.dim_in();
    let mut out = DMatrix::zeros(op.dim_out(), n);
    let mut e = DVector::zeros(n);
    for j in 0..n {
        e[j] = 1.0;
        out.set_column(j, &op.apply(&e));
        e[j] = 0.0;
    }
    out
}

/// Estimates `||K||^2` by power iteration on `K*K` from a seeded random start.
pub fn power_norm_sq(op: &dyn LinearOperator, iters: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = DVector::from_fn(op.dim_in(), |_, _| rng.random::<f64>() - 0.5);
    let mut est = 0.0;
    for _ in 0..iters {
        let nv = v.norm();
        if nv == 0.0 {
            return 0.0;
        }
        v /= nv;
        let w = op.adjoint(&op.apply(&v));
        est = v.dot(&w);
        v = w;
    }
    est
}

/// Eigenvalues of the symmetric compression of `W diag(weights) W^T`.
///
/// With `W = QR`, the nonzero spectrum of `W D W^T` is the spectrum of
/// `R D R^T`. The returned vector has length `k = min(n, r)`; the remaining
/// `n - k` eigenvalues of `W D W^T` are zero.
pub fn low_rank_spectrum(w: &DMatrix<f64>, weights: &[f64]) -> Vec<f64> {
    let r = w.ncols();
    if r == 0 {
        return Vec::new();
    }
    let r_factor = w.clone().qr().r();
    let mut scaled = r_factor.clone();
    for (j, &wj) in weights.iter().enumerate() {
        scaled.column_mut(j).scale_mut(wj);
    }
    let sym = &scaled * r_factor.transpose();
    let sym = (&sym + sym.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.iter().copied().collect()
}

/// Principal square root of a symmetric positive semi-definite matrix.
/// Slightly negative eigenvalues from rounding are clamped to zero.
pub fn psd_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(a.clone());
    let mut v = eig.eigenvectors.clone();
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        v.column_mut(j).scale_mut(l.max(0.0).sqrt());
    }
    &v * eig.eigenvectors.transpose()
}

/// Largest eigenvalue of `A^T A` for a small dense matrix.
pub fn spectral_norm_sq(a: &DMatrix<f64>) -> f64 {
    if a.ncols() == 0 || a.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(a.tr_mul(a))
        .eigenvalues
        .iter()
        .fold(0.0_f64, |m, &l| m.max(l))
}

/// Extreme eigenvalues of a dense symmetric matrix.
pub fn symmetric_extremes(a: &DMatrix<f64>) -> (f64, f64) {
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}
