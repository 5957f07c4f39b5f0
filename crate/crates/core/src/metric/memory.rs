use std::collections::VecDeque;

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_dim, Result};

/// Default curvature rejection threshold for `<s, y> > eps * |s| |y|`.
pub const DEFAULT_EPS_CURV: f64 = 1e-8;

/// Relative threshold under which eigenvalues of the middle matrix are
/// treated as zero and their directions discarded.
pub const SINGULAR_REL_TOL: f64 = 1e-12;

/// Iterate displacement `s = x_{k+1} - x_k` and gradient displacement
/// `y = grad h(x_{k+1}) - grad h(x_k)`.
#[derive(Debug, Clone)]
pub struct CurvaturePair {
    pub s: DVector<f64>,
    pub y: DVector<f64>,
}

/// Choice of the scalar initial matrix `M_{k,0} = base_scale * I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaseScaling {
    Fixed(f64),
    /// `<s, y> / <y, y>` of the newest pair.
    StepOverGradient,
    /// `<y, y> / <s, y>` of the newest pair.
    GradientOverStep,
}

impl BaseScaling {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "sy_yy" => Some(BaseScaling::StepOverGradient),
            "yy_sy" => Some(BaseScaling::GradientOverStep),
            other => other
                .parse::<f64>()
                .ok()
                .filter(|v| *v > 0.0 && v.is_finite())
                .map(BaseScaling::Fixed),
        }
    }
}

impl std::fmt::Display for BaseScaling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BaseScaling::Fixed(v) => write!(f, "{v}"),
            BaseScaling::StepOverGradient => f.write_str("sy_yy"),
            BaseScaling::GradientOverStep => f.write_str("yy_sy"),
        }
    }
}

/// Ring buffer of the `m` most recent accepted curvature pairs.
#[derive(Debug, Clone)]
pub struct LbfgsMemory {
    dim: usize,
    capacity: usize,
    eps_curv: f64,
    scaling: BaseScaling,
    pairs: VecDeque<CurvaturePair>,
}

/// `M_0 + U1 U1^T - U2 U2^T` before the gamma weights and clamping.
#[derive(Debug, Clone)]
pub struct LowRankSplit {
    pub base_scale: f64,
    pub u1: DMatrix<f64>,
    pub u2: DMatrix<f64>,
    /// Number of eigendirections of the middle matrix dropped as singular.
    pub dropped: usize,
}

impl LbfgsMemory {
    pub fn new(dim: usize, capacity: usize) -> Self {
        LbfgsMemory {
            dim,
            capacity,
            eps_curv: DEFAULT_EPS_CURV,
            scaling: BaseScaling::StepOverGradient,
            pairs: VecDeque::with_capacity(capacity),
        }
    }

    pub fn with_eps_curv(mut self, eps: f64) -> Self {
        self.eps_curv = eps.max(0.0);
        self
    }

    pub fn with_scaling(mut self, scaling: BaseScaling) -> Self {
        self.scaling = scaling;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn eps_curv(&self) -> f64 {
        self.eps_curv
    }

    pub fn scaling(&self) -> BaseScaling {
        self.scaling
    }

    /// Oldest first.
    pub fn pairs(&self) -> impl Iterator<Item = &CurvaturePair> {
        self.pairs.iter()
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }

    /// Stores `(s, y)` if it passes the curvature test, evicting the oldest
    /// pair when full. Returns whether the pair was stored.
    pub fn push_pair(&mut self, s: DVector<f64>, y: DVector<f64>) -> Result<bool> {
        check_dim(self.dim, s.len())?;
        check_dim(self.dim, y.len())?;
        if self.capacity == 0 {
            return Ok(false);
        }
        let sy = s.dot(&y);
        if !(sy > self.eps_curv * s.norm() * y.norm()) || !sy.is_finite() {
            return Ok(false);
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back(CurvaturePair { s, y });
        Ok(true)
    }

    pub fn base_scale(&self) -> f64 {
        let newest = match self.pairs.back() {
            Some(p) => p,
            None => {
                return match self.scaling {
                    BaseScaling::Fixed(v) => v,
                    _ => 1.0,
                }
            }
        };
        match self.scaling {
            BaseScaling::Fixed(v) => v,
            BaseScaling::StepOverGradient => newest.s.dot(&newest.y) / newest.y.norm_squared(),
            BaseScaling::GradientOverStep => newest.y.norm_squared() / newest.s.dot(&newest.y),
        }
    }

    /// Compact L-BFGS representation split into positive and negative
    /// low-rank parts.
    ///
    /// With `S`, `Y` holding the stored pairs as columns and `M_0 = b I`:
    ///
    /// ```text
    /// A = [b S, Y],   Q = [[-b S^T S, -L], [-L^T, D]]
    /// M = b I + A Q^{-1} A^T = b I + U1 U1^T - U2 U2^T
    /// ```
    ///
    /// where `D` and `L` are the diagonal and strictly lower triangular parts
    /// of `S^T Y`, and `U1`, `U2` come from the eigendecomposition of `Q^{-1}`
    /// split by sign.
    pub fn split(&self) -> LowRankSplit {
        let n = self.dim;
        let k = self.pairs.len();
        let b = self.base_scale();
        if k == 0 {
            return LowRankSplit {
                base_scale: b,
                u1: DMatrix::zeros(n, 0),
                u2: DMatrix::zeros(n, 0),
                dropped: 0,
            };
        }
        let mut s = DMatrix::zeros(n, k);
        let mut y = DMatrix::zeros(n, k);
        for (j, p) in self.pairs.iter().enumerate() {
            s.set_column(j, &p.s);
            y.set_column(j, &p.y);
        }
        let sty = s.tr_mul(&y);
        let sts = s.tr_mul(&s);

        let mut q = DMatrix::zeros(2 * k, 2 * k);
        for i in 0..k {
            for j in 0..k {
                q[(i, j)] = -b * sts[(i, j)];
                if i > j {
                    // -L in the upper right block, -L^T in the lower left
                    q[(i, k + j)] = -sty[(i, j)];
                    q[(k + j, i)] = -sty[(i, j)];
                }
            }
            q[(k + i, k + i)] = sty[(i, i)];
        }

        let mut a = DMatrix::zeros(n, 2 * k);
        a.view_mut((0, 0), (n, k)).copy_from(&(s * b));
        a.view_mut((0, k), (n, k)).copy_from(&y);

        let eig = SymmetricEigen::new(q);
        let max_abs = eig.eigenvalues.iter().fold(0.0_f64, |m, l| m.max(l.abs()));
        let av = &a * &eig.eigenvectors;

        let mut pos = Vec::new();
        let mut neg = Vec::new();
        let mut dropped = 0;
        for (j, &lam) in eig.eigenvalues.iter().enumerate() {
            if !(lam.abs() >= SINGULAR_REL_TOL * max_abs) || lam == 0.0 {
                dropped += 1;
                continue;
            }
            // eigenvalue of Q^{-1} is 1/lam
            let col = av.column(j) * (1.0 / lam.abs()).sqrt();
            if lam > 0.0 {
                pos.push(col);
            } else {
                neg.push(col);
            }
        }
        if dropped > 0 {
            warn!("compact metric: dropped {dropped} near-singular direction(s)");
        }
        LowRankSplit {
            base_scale: b,
            u1: columns(n, &pos),
            u2: columns(n, &neg),
            dropped,
        }
    }
}

fn columns(n: usize, cols: &[DVector<f64>]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    m
}
