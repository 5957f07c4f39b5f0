use std::io::Write;

use log::warn;
use nalgebra::{DMatrix, DVector};

use super::memory::{LbfgsMemory, LowRankSplit};
use crate::error::{check_dim, Error, Result};
use crate::linalg::low_rank_spectrum;

/// Scalars of the clamped metric `M = c * Mt + alpha I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricParams {
    pub alpha: f64,
    pub c_m: f64,
    pub gamma1: f64,
    pub gamma2: f64,
}

impl Default for MetricParams {
    fn default() -> Self {
        MetricParams {
            alpha: 0.01,
            c_m: 50.0,
            gamma1: 1.0,
            gamma2: 1.0,
        }
    }
}

impl MetricParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidArgument("alpha must be positive".into()));
        }
        if !(self.c_m > self.alpha) {
            return Err(Error::InvalidArgument("c_m must exceed alpha".into()));
        }
        if !(self.gamma1 >= 0.0 && self.gamma2 >= 0.0) {
            return Err(Error::InvalidArgument("gamma weights must be nonnegative".into()));
        }
        Ok(())
    }
}

/// The operator
///
/// ```text
/// M = c (b I + g1 U1 U1^T - g2 U2 U2^T) + alpha I
///   = d I + W+ W+^T - W- W-^T,        d = c b + alpha,  W± = sqrt(c g) U
/// ```
///
/// with an orthonormal basis of the low-rank range cached for `M^{-1}`.
#[derive(Clone)]
pub struct CompactMetric {
    n: usize,
    base_scale: f64,
    u1: DMatrix<f64>,
    u2: DMatrix<f64>,
    gamma1: f64,
    gamma2: f64,
    alpha: f64,
    c_shrink: f64,
    diag: f64,
    w_pos: DMatrix<f64>,
    w_neg: DMatrix<f64>,
    w: DMatrix<f64>,
    signs: Vec<f64>,
    /// `Q` with orthonormal columns spanning `range(W)`, and `Q^T W S W^T Q`.
    range: Option<(DMatrix<f64>, DMatrix<f64>)>,
    lambda_min: f64,
    lambda_max: f64,
}

impl std::fmt::Debug for CompactMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CompactMetric")
            .field("n", &self.n)
            .field("base_scale", &self.base_scale)
            .field("r1", &self.u1.ncols())
            .field("r2", &self.u2.ncols())
            .field("gamma1", &self.gamma1)
            .field("gamma2", &self.gamma2)
            .field("alpha", &self.alpha)
            .field("c_shrink", &self.c_shrink)
            .field("lambda_min", &self.lambda_min)
            .field("lambda_max", &self.lambda_max)
            .finish()
    }
}

impl CompactMetric {
    /// `value * I`, with no floor added.
    pub fn scaled_identity(n: usize, value: f64) -> Self {
        Self::assemble(
            n,
            value,
            DMatrix::zeros(n, 0),
            DMatrix::zeros(n, 0),
            0.0,
            0.0,
            0.0,
            1.0,
        )
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        n: usize,
        base_scale: f64,
        u1: DMatrix<f64>,
        u2: DMatrix<f64>,
        gamma1: f64,
        gamma2: f64,
        alpha: f64,
        c_shrink: f64,
    ) -> Self {
        let diag = c_shrink * base_scale + alpha;
        let w_pos = &u1 * (c_shrink * gamma1).sqrt();
        let w_neg = &u2 * (c_shrink * gamma2).sqrt();
        let (r1, r2) = (w_pos.ncols(), w_neg.ncols());
        let mut w = DMatrix::zeros(n, r1 + r2);
        w.view_mut((0, 0), (n, r1)).copy_from(&w_pos);
        w.view_mut((0, r1), (n, r2)).copy_from(&w_neg);
        let signs: Vec<f64> = std::iter::repeat_n(1.0, r1)
            .chain(std::iter::repeat_n(-1.0, r2))
            .collect();

        let spectrum = low_rank_spectrum(&w, &signs);
        let mut lambda_min = spectrum.iter().fold(f64::INFINITY, |m, &l| m.min(diag + l));
        let mut lambda_max = spectrum.iter().fold(f64::NEG_INFINITY, |m, &l| m.max(diag + l));
        if r1 + r2 < n {
            lambda_min = lambda_min.min(diag);
            lambda_max = lambda_max.max(diag);
        }

        let range = if r1 + r2 > 0 {
            let qr = w.clone().qr();
            let q = qr.q();
            let r = qr.r();
            let mut rs = r.clone();
            for (j, s) in signs.iter().enumerate() {
                rs.column_mut(j).scale_mut(*s);
            }
            let core = &rs * r.transpose();
            Some((q, (&core + core.transpose()) * 0.5))
        } else {
            None
        };

        CompactMetric {
            n,
            base_scale,
            u1,
            u2,
            gamma1,
            gamma2,
            alpha,
            c_shrink,
            diag,
            w_pos,
            w_neg,
            w,
            signs,
            range,
            lambda_min,
            lambda_max,
        }
    }

    /// Applies the gamma weights to a low-rank split and clamps the result
    /// into `[alpha, c_m]`:
    ///
    /// ```text
    /// Mt = b I + g1 U1 U1^T - g2 U2 U2^T
    /// M  = min{(c_m - alpha) / |Mt|_2, 1} Mt + alpha I
    /// ```
    ///
    /// If rounding made `Mt` indefinite, the low-rank part is discarded.
    pub fn from_split(split: &LowRankSplit, params: &MetricParams) -> Result<Self> {
        params.validate()?;
        let n = split.u1.nrows();
        let b = split.base_scale;
        if !(b > 0.0) || !b.is_finite() {
            return Err(Error::InvalidArgument(format!("base scale {b} is not positive")));
        }
        let (lo, hi) = weighted_extremes(split, params.gamma1, params.gamma2);
        if !(lo > 0.0) || !hi.is_finite() {
            warn!("compact metric: weighted matrix not positive definite (min eig {lo:.3e}); using base metric");
            return Ok(Self::clamped_base(n, b, params));
        }
        let norm = hi.max(lo.abs());
        let c = ((params.c_m - params.alpha) / norm).min(1.0);
        Ok(Self::assemble(
            n,
            b,
            split.u1.clone(),
            split.u2.clone(),
            params.gamma1,
            params.gamma2,
            params.alpha,
            c,
        ))
    }

    /// `min{(c_m - alpha)/b, 1} b I + alpha I`.
    pub fn clamped_base(n: usize, b: f64, params: &MetricParams) -> Self {
        let c = ((params.c_m - params.alpha) / b).min(1.0);
        Self::assemble(
            n,
            b,
            DMatrix::zeros(n, 0),
            DMatrix::zeros(n, 0),
            0.0,
            0.0,
            params.alpha,
            c,
        )
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn base_scale(&self) -> f64 {
        self.base_scale
    }

    pub fn gamma1(&self) -> f64 {
        self.gamma1
    }

    pub fn gamma2(&self) -> f64 {
        self.gamma2
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn c_shrink(&self) -> f64 {
        self.c_shrink
    }

    pub fn u1(&self) -> &DMatrix<f64> {
        &self.u1
    }

    pub fn u2(&self) -> &DMatrix<f64> {
        &self.u2
    }

    /// Scalar part `d = c b + alpha`.
    pub fn diag(&self) -> f64 {
        self.diag
    }

    /// `sqrt(c g1) U1`.
    pub fn w_pos(&self) -> &DMatrix<f64> {
        &self.w_pos
    }

    /// `sqrt(c g2) U2`.
    pub fn w_neg(&self) -> &DMatrix<f64> {
        &self.w_neg
    }

    pub fn rank(&self) -> usize {
        self.w.ncols()
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// The same metric with its low-rank part removed: `d I`.
    pub fn scalar_part(&self) -> Self {
        Self::scaled_identity(self.n, self.diag)
    }

    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.n, x.len())?;
        let mut out = x * self.diag;
        if self.rank() > 0 {
            let mut coef = self.w.tr_mul(x);
            for (c, s) in coef.iter_mut().zip(&self.signs) {
                *c *= s;
            }
            out.gemv(1.0, &self.w, &coef, 1.0);
        }
        Ok(out)
    }

    /// `M^{-1} x`, solved on `range(W)` and scaled by `1 / d` on its complement.
    pub fn apply_inverse(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.n, x.len())?;
        self.solve_with_diag(self.diag, x)
    }

    /// `(M + shift I)^{-1} x` for `shift >= 0`.
    pub fn solve_shifted(&self, shift: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.n, x.len())?;
        self.solve_with_diag(self.diag + shift, x)
    }

    /// With `W = Q R`: `(d I + W S W^T)^{-1} x = (x - Q Q^T x) / d + Q (d I + R S R^T)^{-1} Q^T x`.
    fn solve_with_diag(&self, d: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        let Some((q, core)) = &self.range else {
            return Ok(x / d);
        };
        let qx = q.tr_mul(x);
        let mut small = core.clone();
        for i in 0..small.nrows() {
            small[(i, i)] += d;
        }
        let z = match small.clone().cholesky() {
            Some(ch) => ch.solve(&qx),
            None => small
                .lu()
                .solve(&qx)
                .ok_or_else(|| Error::InvalidArgument("singular metric restricted to its low-rank range".into()))?,
        };
        let mut out = x / d;
        out.gemv(-1.0 / d, q, &qx, 1.0);
        out.gemv(1.0, q, &z, 1.0);
        Ok(out)
    }

    /// `|x|_M^2 = <Mx, x>`.
    pub fn m_norm_sq(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim(self.n, x.len())?;
        let mut val = self.diag * x.norm_squared();
        if self.rank() > 0 {
            let coef = self.w.tr_mul(x);
            for (c, s) in coef.iter().zip(&self.signs) {
                val += s * c * c;
            }
        }
        Ok(val)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::identity(self.n, self.n) * self.diag;
        m += &self.w_pos * self.w_pos.transpose();
        m -= &self.w_neg * self.w_neg.transpose();
        m
    }

    /// Row-major dump of the dense matrix, one row per line.
    pub fn write_dense<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        let m = self.to_dense();
        for i in 0..self.n {
            let row: Vec<String> = (0..self.n).map(|j| format!("{:.17e}", m[(i, j)])).collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

/// Extreme eigenvalues of `b I + g1 U1 U1^T - g2 U2 U2^T`.
pub(crate) fn weighted_extremes(split: &LowRankSplit, gamma1: f64, gamma2: f64) -> (f64, f64) {
    let n = split.u1.nrows();
    let (r1, r2) = (split.u1.ncols(), split.u2.ncols());
    let mut w = DMatrix::zeros(n, r1 + r2);
    w.view_mut((0, 0), (n, r1)).copy_from(&split.u1);
    w.view_mut((0, r1), (n, r2)).copy_from(&split.u2);
    let weights: Vec<f64> = std::iter::repeat_n(gamma1, r1)
        .chain(std::iter::repeat_n(-gamma2, r2))
        .collect();
    let spectrum = low_rank_spectrum(&w, &weights);
    let b = split.base_scale;
    let mut lo = spectrum.iter().fold(f64::INFINITY, |m, &l| m.min(b + l));
    let mut hi = spectrum.iter().fold(f64::NEG_INFINITY, |m, &l| m.max(b + l));
    if r1 + r2 < n {
        lo = lo.min(b);
        hi = hi.max(b);
    }
    (lo, hi)
}

/// Builds the clamped compact metric from the current memory.
pub fn build_metric(mem: &LbfgsMemory, params: &MetricParams) -> Result<CompactMetric> {
    CompactMetric::from_split(&mem.split(), params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(n: usize, i: usize) -> DVector<f64> {
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        v
    }

    fn fixed_mem(n: usize, m: usize) -> LbfgsMemory {
        LbfgsMemory::new(n, m).with_scaling(crate::metric::BaseScaling::Fixed(1.0))
    }

    #[test]
    fn empty_memory_gives_clamped_scalar() {
        let mem = fixed_mem(2, 3);
        let m = build_metric(&mem, &MetricParams::default()).unwrap();
        assert!((m.diag() - 1.01).abs() < 1e-15);
        let out = m.apply(&DVector::from_vec(vec![1.0, 2.0])).unwrap();
        assert!((out[0] - 1.01).abs() < 1e-15 && (out[1] - 2.02).abs() < 1e-15);
        let inv = m.apply_inverse(&DVector::from_vec(vec![1.01, 0.0])).unwrap();
        assert!((inv[0] - 1.0).abs() < 1e-15 && inv[1] == 0.0);
        assert!((m.m_norm_sq(&e(2, 0)).unwrap() - 1.01).abs() < 1e-15);
        assert_eq!(m.m_norm_sq(&DVector::zeros(2)).unwrap(), 0.0);
    }

    #[test]
    fn single_pair_is_the_bfgs_update() {
        let mut mem = fixed_mem(2, 3);
        mem.push_pair(e(2, 0), e(2, 0) * 2.0).unwrap();
        let m = build_metric(&mem, &MetricParams::default()).unwrap();
        // I + yy^T/<s,y> - ss^T/<s,s> = diag(2, 1), no clamping, plus alpha
        let dense = m.to_dense();
        let expected = DMatrix::from_row_slice(2, 2, &[2.01, 0.0, 0.0, 1.01]);
        assert!((dense - expected).abs().max() < 1e-12);
        assert_eq!(m.c_shrink(), 1.0);
    }

    #[test]
    fn clamp_shrinks_large_metrics() {
        let mut mem = fixed_mem(2, 1);
        mem.push_pair(e(2, 0), e(2, 0) * 200.0).unwrap();
        let params = MetricParams::default();
        let m = build_metric(&mem, &params).unwrap();
        assert!(m.c_shrink() < 1.0);
        assert!((m.lambda_max() - params.c_m).abs() < 1e-9);
        assert!(m.lambda_min() >= params.alpha);
    }

    #[test]
    fn dimension_errors() {
        let m = CompactMetric::identity(3);
        assert!(m.apply(&DVector::zeros(2)).is_err());
        assert!(m.apply_inverse(&DVector::zeros(4)).is_err());
        assert!(m.m_norm_sq(&DVector::zeros(1)).is_err());
    }

    #[test]
    fn dense_dump_has_one_row_per_line() {
        let m = CompactMetric::scaled_identity(3, 2.0);
        let mut buf = Vec::new();
        m.write_dense(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows.len(), 3);
        let first: Vec<f64> = rows[0].split_whitespace().map(|t| t.parse().unwrap()).collect();
        assert_eq!(first, vec![2.0, 0.0, 0.0]);
    }

    #[test]
    fn shifted_solve_matches_dense() {
        let mut mem = fixed_mem(4, 2);
        mem.push_pair(
            DVector::from_vec(vec![1.0, 0.5, -0.2, 0.3]),
            DVector::from_vec(vec![2.0, 0.4, 0.1, 0.2]),
        )
        .unwrap();
        let m = build_metric(&mem, &MetricParams::default()).unwrap();
        let x = DVector::from_vec(vec![0.3, -1.0, 2.0, 0.5]);
        let dense = m.to_dense() + DMatrix::identity(4, 4) * 0.7;
        let expected = dense.lu().solve(&x).unwrap();
        let got = m.solve_shifted(0.7, &x).unwrap();
        assert!((got - expected).norm() < 1e-12);
    }
}
