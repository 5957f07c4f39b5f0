//! Plain identity-metric methods, written without the metric machinery.

use std::time::{Duration, Instant};

use nalgebra::DVector;

use super::config::{BarSigmaRule, SolverConfig};
use super::engine::{Ergodic, IterateView, Observer, RunOutput, RunStats};
use super::problem::SaddleProblem;
use super::trace::{ConvergenceRecord, TraceRow};
use crate::error::{Error, Result};
use crate::metric::CompactMetric;

/// Largest `sigma` with `beta sigma^2 |K|^2 + beta sigma L <= delta`.
pub fn pdhg_sigma(delta: f64, beta: f64, norm_k: f64, lipschitz_h: f64) -> f64 {
    let a = beta * norm_k * norm_k;
    let b = beta * lipschitz_h;
    if a == 0.0 {
        return if b == 0.0 { f64::INFINITY } else { delta / b };
    }
    (-b + (b * b + 4.0 * a * delta).sqrt()) / (2.0 * a)
}

pub(crate) fn lipschitz(problem: &SaddleProblem, cfg: &SolverConfig) -> Result<f64> {
    cfg.lipschitz_h.or(problem.lipschitz_h).ok_or_else(|| {
        Error::InvalidConfig("fixed-step methods need a Lipschitz constant for grad h".into())
    })
}

/// Line-search primal-dual method with the Euclidean metric and constant `beta`.
pub fn run_pdal(
    problem: &SaddleProblem,
    cfg: &SolverConfig,
    x1: &DVector<f64>,
    y0: &DVector<f64>,
    observer: Option<Observer<'_>>,
) -> Result<RunOutput> {
    run_plain(problem, cfg, x1, y0, None, observer)
}

/// Fixed-step primal-dual hybrid gradient with `theta = 1`.
///
/// The step is `cfg.sigma_fixed` when given, otherwise [`pdhg_sigma`].
pub fn run_pdhg_fixed(
    problem: &SaddleProblem,
    cfg: &SolverConfig,
    x1: &DVector<f64>,
    y0: &DVector<f64>,
    observer: Option<Observer<'_>>,
) -> Result<RunOutput> {
    let sigma = match cfg.sigma_fixed {
        Some(s) => s,
        None => pdhg_sigma(cfg.delta, cfg.beta, problem.operator_norm(), lipschitz(problem, cfg)?),
    };
    if !sigma.is_finite() {
        return Err(Error::InvalidConfig("cannot derive a finite fixed step; set sigma_fixed".into()));
    }
    run_plain(problem, cfg, x1, y0, Some(sigma), observer)
}

fn run_plain(
    problem: &SaddleProblem,
    cfg: &SolverConfig,
    x1: &DVector<f64>,
    y0: &DVector<f64>,
    fixed: Option<f64>,
    mut observer: Option<Observer<'_>>,
) -> Result<RunOutput> {
    cfg.validate()?;
    problem.check_start(x1, y0)?;
    let n = problem.dim_x();
    let identity = CompactMetric::identity(n);
    let mut stats = RunStats::default();
    let mut trace = ConvergenceRecord::new();
    let mut ergodic = Ergodic::new(n, y0);
    let start = Instant::now();
    let mut excluded = Duration::ZERO;

    let grad_of = |x: &DVector<f64>, hits: &mut usize| -> Result<DVector<f64>> {
        if fixed.is_some() {
            let (g, h) = problem.h.gradient_relaxed(x);
            *hits += h;
            Ok(g)
        } else {
            problem.h.gradient(x)
        }
    };

    let mut x = x1.clone();
    let mut y_prev = y0.clone();
    let mut kx = problem.k.apply(&x);
    let mut grad = grad_of(&x, &mut stats.floor_hits)?;
    let (mut sigma_prev, mut theta_prev) = match fixed {
        Some(s) => (s, 1.0),
        None => (cfg.sigma0, cfg.theta0),
    };
    let beta = cfg.beta;

    for k in 1..=cfg.max_iters {
        let y = problem.fstar.prox(sigma_prev, 1.0, &(&y_prev + &kx * sigma_prev));
        let dual_res = (&y - &y_prev).norm() / sigma_prev;
        let sigma_bar = match (fixed, cfg.bar_sigma_rule) {
            (Some(s), _) => s,
            (None, BarSigmaRule::Conservative) => sigma_prev,
            (None, BarSigmaRule::Aggressive) => (1.0 + theta_prev).sqrt() * sigma_prev,
        };
        let kty = problem.k.adjoint(&y);
        let ktdy = problem.k.adjoint(&(&y - &y_prev));

        let mut trials = 0;
        let (x_new, kx_new, sigma, theta, tau, lhs, rhs) = loop {
            if trials >= cfg.ls_max_trials {
                return Err(Error::LineSearch { trials }.at(k));
            }
            let sigma = sigma_bar * cfg.mu.powi(trials as i32);
            trials += 1;
            let theta = sigma / sigma_prev;
            let tau = beta * sigma;
            let step = &kty + &ktdy * theta + &grad;
            let x_new = problem.g.prox(tau, 1.0, &(&x - step * tau));
            let kx_new = problem.k.apply(&x_new);
            if fixed.is_some() {
                break (x_new, kx_new, sigma, theta, tau, f64::NAN, f64::NAN);
            }
            let breg = match problem.h.bregman(&x_new, &x, &grad) {
                Ok(b) if b.is_finite() => b,
                Ok(_) | Err(Error::Domain(_)) => continue,
                Err(e) => return Err(e.at(k)),
            };
            let dx = &x_new - &x;
            let lhs = tau * sigma * (&kx_new - &kx).norm_squared() + 2.0 * tau * breg;
            let rhs = cfg.delta * dx.norm_squared();
            if lhs <= rhs {
                break (x_new, kx_new, sigma, theta, tau, lhs, rhs);
            }
        };

        let grad_new = grad_of(&x_new, &mut stats.floor_hits).map_err(|e| e.at(k))?;
        let y_bar = &y + (&y - &y_prev) * theta;
        ergodic.add(sigma, theta, &x_new, &y_bar);
        let step_res = (&x_new - &x).norm() / tau;

        let pause = Instant::now();
        let primal = problem.primal_value(&x_new);
        if let Some(obs) = observer.as_mut() {
            obs(&IterateView {
                k,
                x_prev: &x,
                x: &x_new,
                y_prev: &y_prev,
                y: &y,
                y_bar: &y_bar,
                sigma,
                tau,
                theta,
                beta,
                trials,
                lhs,
                rhs,
                metric: &identity,
                ergodic: &ergodic,
            });
        }
        excluded += pause.elapsed();
        trace.push(TraceRow {
            iter: k,
            wall_s: if cfg.wall_clock {
                (start.elapsed() - excluded).as_secs_f64()
            } else {
                0.0
            },
            sigma,
            tau,
            theta,
            beta,
            ls_trials: trials,
            primal,
            gap: f64::NAN,
            dual_res,
            rank: 0,
        });

        x = x_new;
        kx = kx_new;
        grad = grad_new;
        y_prev = y;
        sigma_prev = sigma;
        theta_prev = theta;
        stats.iterations = k;
        if cfg.tol > 0.0 && step_res <= cfg.tol && dual_res <= cfg.tol {
            stats.converged = true;
            break;
        }
    }
    stats.wall_s = if cfg.wall_clock {
        (start.elapsed() - excluded).as_secs_f64()
    } else {
        0.0
    };
    Ok(RunOutput {
        x_avg: ergodic.x_avg(),
        y_avg: ergodic.y_avg(),
        x,
        y: y_prev,
        trace,
        stats,
        metrics: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pdhg_sigma_solves_the_quadratic() {
        let (d, b, nk, l) = (0.9, 2.0, 3.0, 1.5);
        let s = pdhg_sigma(d, b, nk, l);
        assert!((b * s * s * nk * nk + b * s * l - d).abs() < 1e-14);
        assert_eq!(pdhg_sigma(1.0, 1.0, 0.0, 2.0), 0.5);
        assert!(pdhg_sigma(1.0, 1.0, 0.0, 0.0).is_infinite());
    }
}
