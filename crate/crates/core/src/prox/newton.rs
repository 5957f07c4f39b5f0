use nalgebra::{DMatrix, DVector};

use super::function::ProxFunction;
use crate::error::{check_dim, Error, Result};

const MAX_SHRINKS: usize = 30;
const SINGULAR_SHIFT: f64 = 1e-8;
const SUFFICIENT_DECREASE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    pub max_iters: usize,
    /// Relative tolerance; the absolute one is `tol * (1 + |x|)`.
    pub tol: f64,
    /// Inexactness budget for the linear solves. Solves are exact, so any
    /// value `>= 0` is honoured trivially; the realised error is reported.
    pub rho: f64,
    /// Backtracking factor in `(0, 1)`; `1` disables globalization.
    pub armijo_shrink: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            max_iters: 50,
            tol: 1e-10,
            rho: 0.0,
            armijo_shrink: 0.5,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iters == 0 || !(self.rho >= 0.0) {
            return Err(Error::InvalidConfig(
                "newton: need tol > 0, max_iters > 0 and rho >= 0".into(),
            ));
        }
        if !(self.armijo_shrink > 0.0 && self.armijo_shrink <= 1.0) {
            return Err(Error::InvalidConfig("newton: armijo_shrink must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NewtonStats {
    pub iterations: usize,
    /// `|L(alpha_k)|` for `k = 0, 1, ...`.
    pub residual_history: Vec<f64>,
    /// Largest relative residual `|G d + L| / |L|` of the linear solves.
    pub max_linear_error: f64,
}

impl NewtonStats {
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(0.0)
    }
}

/// Root-finding problem for the proximal map of `g` under
/// `B = b0 I + U1 U1^T - U2 U2^T`, anchored at `x`.
///
/// With `B1 = b0 I + U1 U1^T`, `P = prox^{b0 I}_g` and
/// `z(a) = x + B1^{-1} U2 a2 - U1 a1 / b0`, the unknown `a = (a1, a2)` solves
///
/// ```text
/// L1(a) = U1^T (x + B1^{-1} U2 a2 - P(z(a))) + a1 = 0
/// L2(a) = U2^T (x - P(z(a))) + a2 = 0
/// ```
///
/// and the proximal point is `P(z(a*))`.
pub struct RootProblem<'a> {
    x: DVector<f64>,
    u1: DMatrix<f64>,
    u2: DMatrix<f64>,
    b0: f64,
    /// `B1^{-1} U2`
    w2: DMatrix<f64>,
    u1_w2: DMatrix<f64>,
    u1x: DVector<f64>,
    u2x: DVector<f64>,
    g: &'a ProxFunction,
}

impl<'a> RootProblem<'a> {
    pub fn new(x: DVector<f64>, u1: DMatrix<f64>, u2: DMatrix<f64>, b0: f64, g: &'a ProxFunction) -> Result<Self> {
        let n = x.len();
        check_dim(g.dim(), n)?;
        check_dim(n, u1.nrows())?;
        check_dim(n, u2.nrows())?;
        if !(b0 > 0.0) {
            return Err(Error::InvalidArgument("B0 scale must be positive".into()));
        }
        if u1.ncols() + u2.ncols() == 0 {
            return Err(Error::InvalidArgument("root problem needs a low-rank part".into()));
        }
        let w2 = if u1.ncols() == 0 {
            &u2 / b0
        } else {
            // Woodbury: B1^{-1} = (I - U1 (b0 I + U1^T U1)^{-1} U1^T) / b0
            let cap = DMatrix::identity(u1.ncols(), u1.ncols()) * b0 + u1.transpose() * &u1;
            let chol = cap
                .cholesky()
                .ok_or_else(|| Error::InvalidArgument("B1 capacitance is not positive definite".into()))?;
            let inner = chol.solve(&(u1.transpose() * &u2));
            (&u2 - &u1 * inner) / b0
        };
        Ok(RootProblem {
            u1_w2: u1.transpose() * &w2,
            u1x: u1.transpose() * &x,
            u2x: u2.transpose() * &x,
            x,
            u1,
            u2,
            b0,
            w2,
            g,
        })
    }

    pub fn rank(&self) -> (usize, usize) {
        (self.u1.ncols(), self.u2.ncols())
    }

    pub fn anchor(&self) -> &DVector<f64> {
        &self.x
    }

    fn split<'v>(&self, alpha: &'v DVector<f64>) -> (nalgebra::DVectorView<'v, f64>, nalgebra::DVectorView<'v, f64>) {
        let r1 = self.u1.ncols();
        (alpha.rows(0, r1), alpha.rows(r1, self.u2.ncols()))
    }

    pub fn shifted_point(&self, alpha: &DVector<f64>) -> DVector<f64> {
        let (a1, a2) = self.split(alpha);
        let mut z = self.x.clone();
        if a2.len() > 0 {
            z.gemv(1.0, &self.w2, &a2, 1.0);
        }
        if a1.len() > 0 {
            z.gemv(-1.0 / self.b0, &self.u1, &a1, 1.0);
        }
        z
    }

    /// `P(z(alpha))`
    pub fn prox_at(&self, alpha: &DVector<f64>) -> DVector<f64> {
        self.g.prox(1.0, self.b0, &self.shifted_point(alpha))
    }

    pub fn residual(&self, alpha: &DVector<f64>) -> DVector<f64> {
        let p = self.prox_at(alpha);
        self.residual_from(alpha, &p)
    }

    fn residual_from(&self, alpha: &DVector<f64>, p: &DVector<f64>) -> DVector<f64> {
        let (a1, a2) = self.split(alpha);
        let (r1, r2) = self.rank();
        let mut out = DVector::zeros(r1 + r2);
        if r1 > 0 {
            let l1 = &self.u1x + &self.u1_w2 * a2 - self.u1.tr_mul(p) + a1;
            out.rows_mut(0, r1).copy_from(&l1);
        }
        if r2 > 0 {
            let l2 = &self.u2x - self.u2.tr_mul(p) + a2;
            out.rows_mut(r1, r2).copy_from(&l2);
        }
        out
    }

    /// Generalized Jacobian of the residual at `alpha`.
    pub fn jacobian(&self, alpha: &DVector<f64>) -> DMatrix<f64> {
        let z = self.shifted_point(alpha);
        let j = self.g.jacobian(1.0, self.b0, &z);
        let (r1, r2) = self.rank();
        let mut out = DMatrix::identity(r1 + r2, r1 + r2);
        let ju1 = j.apply_columns(&self.u1);
        let jw2 = j.apply_columns(&self.w2);
        if r1 > 0 {
            let mut g11 = out.view_mut((0, 0), (r1, r1));
            g11 += self.u1.tr_mul(&ju1) / self.b0;
        }
        if r1 > 0 && r2 > 0 {
            out.view_mut((0, r1), (r1, r2))
                .copy_from(&(&self.u1_w2 - self.u1.tr_mul(&jw2)));
            out.view_mut((r1, 0), (r2, r1))
                .copy_from(&(self.u2.tr_mul(&ju1) / self.b0));
        }
        if r2 > 0 {
            let mut g22 = out.view_mut((r1, r1), (r2, r2));
            g22 -= self.u2.tr_mul(&jw2);
        }
        out
    }
}

fn solve_dense(g: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    if let Some(d) = g.clone().lu().solve(rhs) {
        if d.iter().all(|v| v.is_finite()) {
            return d;
        }
    }
    let shifted = g + DMatrix::identity(g.nrows(), g.ncols()) * SINGULAR_SHIFT;
    shifted
        .lu()
        .solve(rhs)
        .unwrap_or_else(|| DVector::zeros(rhs.len()))
}

/// Semi-smooth Newton iteration for `L(alpha) = 0`, globalized by residual
/// backtracking unless `armijo_shrink == 1`.
pub fn semismooth_newton(
    problem: &RootProblem<'_>,
    alpha0: &DVector<f64>,
    cfg: &NewtonConfig,
) -> Result<(DVector<f64>, NewtonStats)> {
    let (r1, r2) = problem.rank();
    check_dim(r1 + r2, alpha0.len())?;
    let tol = cfg.tol * (1.0 + problem.anchor().norm());
    let mut stats = NewtonStats::default();

    let mut alpha = alpha0.clone();
    let mut res = problem.residual(&alpha);
    let mut norm = res.norm();
    stats.residual_history.push(norm);

    while norm > tol {
        if stats.iterations >= cfg.max_iters {
            return Err(Error::NewtonFailure {
                iterations: stats.iterations,
                residual: norm,
                best: alpha,
            });
        }
        let g = problem.jacobian(&alpha);
        let step = solve_dense(&g, &(-&res));
        let lin_err = (&g * &step + &res).norm() / norm;
        stats.max_linear_error = stats.max_linear_error.max(lin_err);

        let mut t = 1.0;
        let mut shrinks = 0;
        let (next, next_res, next_norm) = loop {
            let cand = &alpha + &step * t;
            let cand_res = problem.residual(&cand);
            let cand_norm = cand_res.norm();
            let local = cfg.armijo_shrink >= 1.0;
            if local || cand_norm <= (1.0 - SUFFICIENT_DECREASE * t) * norm {
                break (cand, cand_res, cand_norm);
            }
            shrinks += 1;
            if shrinks > MAX_SHRINKS {
                return Err(Error::NewtonFailure {
                    iterations: stats.iterations,
                    residual: norm,
                    best: alpha,
                });
            }
            t *= cfg.armijo_shrink;
        };
        alpha = next;
        res = next_res;
        norm = next_norm;
        stats.iterations += 1;
        stats.residual_history.push(norm);
        if !norm.is_finite() {
            return Err(Error::NewtonFailure {
                iterations: stats.iterations,
                residual: norm,
                best: alpha,
            });
        }
    }
    Ok((alpha, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem_data() -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
        let x = DVector::from_vec(vec![0.3, -0.4, 1.2, 0.8]);
        let u1 = DMatrix::from_column_slice(4, 1, &[0.5, 0.1, -0.2, 0.3]);
        let u2 = DMatrix::from_column_slice(4, 1, &[0.1, 0.2, 0.1, -0.1]);
        (x, u1, u2)
    }

    #[test]
    fn zero_function_needs_no_iterations() {
        let (x, u1, u2) = problem_data();
        let g = ProxFunction::zero(4);
        let p = RootProblem::new(x, u1, u2, 1.0, &g).unwrap();
        let (alpha, stats) = semismooth_newton(&p, &DVector::zeros(2), &NewtonConfig::default()).unwrap();
        assert_eq!(stats.iterations, 0);
        assert_eq!(alpha, DVector::zeros(2));
    }

    #[test]
    fn linear_function_needs_one_iteration() {
        let (x, u1, u2) = problem_data();
        let g = ProxFunction::linear(DVector::from_vec(vec![1.0, -2.0, 0.5, 0.0]));
        let p = RootProblem::new(x, u1, u2, 1.3, &g).unwrap();
        let (_, stats) = semismooth_newton(&p, &DVector::zeros(2), &NewtonConfig::default()).unwrap();
        assert_eq!(stats.iterations, 1);
    }

    #[test]
    fn jacobian_matches_finite_differences_for_smooth_prox() {
        let (x, u1, u2) = problem_data();
        let g = ProxFunction::quadratic(DVector::from_vec(vec![1.0, 0.0, -1.0, 2.0]));
        let p = RootProblem::new(x, u1, u2, 0.7, &g).unwrap();
        let a = DVector::from_vec(vec![0.2, -0.3]);
        let jac = p.jacobian(&a);
        let h = 1e-6;
        for j in 0..2 {
            let mut e = DVector::zeros(2);
            e[j] = h;
            let fd = (p.residual(&(&a + &e)) - p.residual(&(&a - &e))) / (2.0 * h);
            for i in 0..2 {
                assert!((fd[i] - jac[(i, j)]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = NewtonConfig::default();
        cfg.armijo_shrink = 0.0;
        assert!(cfg.validate().is_err());
        cfg.armijo_shrink = 1.0;
        assert!(cfg.validate().is_ok());
        cfg.tol = 0.0;
        assert!(cfg.validate().is_err());
    }
}
