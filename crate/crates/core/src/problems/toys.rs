use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{DenseOperator, IdentityOperator};
use crate::prox::ProxFunction;
use crate::solver::{QuadraticSmooth, SaddleProblem, ZeroSmooth};

/// A small problem together with its saddle point.
#[derive(Debug)]
pub struct Toy {
    pub problem: SaddleProblem,
    pub x_star: DVector<f64>,
    pub y_star: DVector<f64>,
}

/// `g = 0.5 |x - b|^2`, `h = 0`, `K = I`, `f* = 0`.
///
/// Stationarity gives `x - b + y = 0` and `x = 0`, so the saddle point is
/// `(0, b)` and the gap at `(x, y)` is `0.5 |x|^2`.
pub fn quadratic_toy(b: DVector<f64>) -> Result<Toy> {
    let n = b.len();
    let problem = SaddleProblem::new(
        Box::new(IdentityOperator(n)),
        Box::new(ZeroSmooth(n)),
        ProxFunction::quadratic(b.clone()),
        ProxFunction::zero(n),
    )?
    .with_norm_k(1.0)
    .with_lipschitz_h(0.0)
    .with_gamma_strong(1.0);
    Ok(Toy {
        problem,
        x_star: DVector::zeros(n),
        y_star: b,
    })
}

/// `g = 0.5 |x - b|^2`, `h = 0`, `K = I`, `f*` the indicator of the ball of
/// radius `rho`, i.e. `min_x 0.5 |x - b|^2 + rho |x|`.
///
/// For `|b| > rho`: `x* = (1 - rho / |b|) b`, `y* = rho b / |b|`.
pub fn strongly_convex_toy(b: DVector<f64>, rho: f64) -> Result<Toy> {
    let n = b.len();
    let norm = b.norm();
    if !(norm > rho) {
        return Err(Error::InvalidArgument("strongly convex toy needs |b| > rho".into()));
    }
    let problem = SaddleProblem::new(
        Box::new(IdentityOperator(n)),
        Box::new(ZeroSmooth(n)),
        ProxFunction::quadratic(b.clone()),
        ProxFunction::l2inf_ball(n, rho, n)?,
    )?
    .with_norm_k(1.0)
    .with_lipschitz_h(0.0)
    .with_gamma_strong(1.0);
    Ok(Toy {
        problem,
        x_star: &b * (1.0 - rho / norm),
        y_star: &b * (rho / norm),
    })
}

/// Random problem with a nontrivial smooth term:
/// `h = 0.5 w |x - c|^2`, `g = nonneg`, dense `K` (`m x n`), `f*` a group ball.
/// The saddle point is not known in closed form.
pub fn smooth_toy(n: usize, m: usize, seed: u64) -> Result<SaddleProblem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = DMatrix::from_fn(m, n, |_, _| rng.random::<f64>() - 0.5);
    let c = DVector::from_fn(n, |_, _| 2.0 * rng.random::<f64>() - 0.5);
    let weight = 3.0;
    let norm_k = crate::linalg::spectral_norm_sq(&k).sqrt();
    let group = if m % 2 == 0 { 2 } else { 1 };
    let center = c.clone();
    let obj_k = k.clone();
    let objective = move |x: &DVector<f64>| -> f64 {
        if x.iter().any(|v| *v < 0.0) {
            return f64::INFINITY;
        }
        let kx = &obj_k * x;
        let tv: f64 = kx.as_slice().chunks(group).map(|g| g.iter().map(|v| v * v).sum::<f64>().sqrt()).sum();
        0.5 * weight * (x - &center).norm_squared() + 0.5 * tv
    };
    Ok(SaddleProblem::new(
        Box::new(DenseOperator(k)),
        Box::new(QuadraticSmooth { weight, center: c }),
        ProxFunction::nonneg(n),
        ProxFunction::l2inf_ball(m, 0.5, group)?,
    )?
    .with_norm_k(norm_k)
    .with_lipschitz_h(weight)
    .with_objective(Box::new(objective)))
}
