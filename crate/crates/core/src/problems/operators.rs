use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::LinearOperator;

/// Periodic 2-D convolution with a normalized nonnegative kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurOperator {
    width: usize,
    height: usize,
    radius: usize,
    /// `(2r+1) x (2r+1)`, row-major
    kernel: Vec<f64>,
}

impl BlurOperator {
    pub fn new(width: usize, height: usize, radius: usize, kernel: Vec<f64>) -> Result<Self> {
        let side = 2 * radius + 1;
        if kernel.len() != side * side {
            return Err(Error::DimensionMismatch {
                expected: side * side,
                got: kernel.len(),
            });
        }
        if kernel.iter().any(|k| !(*k >= 0.0)) {
            return Err(Error::InvalidArgument("blur kernel entries must be nonnegative".into()));
        }
        let total: f64 = kernel.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("blur kernel sums to {total}, not 1")));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("image dimensions must be positive".into()));
        }
        Ok(BlurOperator {
            width,
            height,
            radius,
            kernel,
        })
    }

    pub fn gaussian(width: usize, height: usize, radius: usize, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidArgument("blur sigma must be positive".into()));
        }
        let r = radius as isize;
        let mut kernel = Vec::new();
        for a in -r..=r {
            for b in -r..=r {
                kernel.push((-((a * a + b * b) as f64) / (2.0 * sigma * sigma)).exp());
            }
        }
        let total: f64 = kernel.iter().sum();
        kernel.iter_mut().for_each(|k| *k /= total);
        Self::new(width, height, radius, kernel)
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    fn filter(&self, x: &DVector<f64>, sign: isize) -> DVector<f64> {
        let (w, h, r) = (self.width as isize, self.height as isize, self.radius as isize);
        let side = 2 * r + 1;
        let mut out = DVector::zeros(x.len());
        for i in 0..h {
            for j in 0..w {
                let mut acc = 0.0;
                for a in 0..side {
                    let ii = (i - sign * (a - r)).rem_euclid(h);
                    for b in 0..side {
                        let jj = (j - sign * (b - r)).rem_euclid(w);
                        acc += self.kernel[(a * side + b) as usize] * x[(ii * w + jj) as usize];
                    }
                }
                out[(i * w + j) as usize] = acc;
            }
        }
        out
    }
}

impl LinearOperator for BlurOperator {
    fn dim_in(&self) -> usize {
        self.width * self.height
    }
    fn dim_out(&self) -> usize {
        self.width * self.height
    }
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.filter(x, 1)
    }
    fn adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        self.filter(y, -1)
    }
}

/// Forward differences with Neumann boundary. The output stores
/// `(d/dcol, d/drow)` interleaved per pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GradOperator {
    pub width: usize,
    pub height: usize,
}

impl GradOperator {
    pub fn new(width: usize, height: usize) -> Self {
        GradOperator { width, height }
    }

    /// `|D|^2 <= 8`
    pub const NORM_SQ_BOUND: f64 = 8.0;
}

impl LinearOperator for GradOperator {
    fn dim_in(&self) -> usize {
        self.width * self.height
    }
    fn dim_out(&self) -> usize {
        2 * self.width * self.height
    }
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let (w, h) = (self.width, self.height);
        let mut out = DVector::zeros(2 * w * h);
        for i in 0..h {
            for j in 0..w {
                let p = i * w + j;
                if j + 1 < w {
                    out[2 * p] = x[p + 1] - x[p];
                }
                if i + 1 < h {
                    out[2 * p + 1] = x[p + w] - x[p];
                }
            }
        }
        out
    }
    fn adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        let (w, h) = (self.width, self.height);
        let mut out = DVector::zeros(w * h);
        for i in 0..h {
            for j in 0..w {
                let p = i * w + j;
                let mut v = 0.0;
                if j + 1 < w {
                    v -= y[2 * p];
                }
                if j > 0 {
                    v += y[2 * (p - 1)];
                }
                if i + 1 < h {
                    v -= y[2 * p + 1];
                }
                if i > 0 {
                    v += y[2 * (p - w) + 1];
                }
                out[p] = v;
            }
        }
        out
    }
}
