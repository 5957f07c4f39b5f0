use std::time::{Duration, Instant};

use log::{debug, warn};
use nalgebra::DVector;

use super::config::{BarSigmaRule, SolverConfig};
use super::problem::SaddleProblem;
use super::trace::{ConvergenceRecord, TraceRow};
use crate::error::{Error, Result};
use crate::metric::{CompactMetric, LbfgsMemory, MetricSequence};
use crate::prox::{MetricProx, ProxKind};

/// Running step-size weighted averages of the iterates.
#[derive(Debug, Clone)]
pub struct Ergodic {
    x_acc: DVector<f64>,
    y_acc: DVector<f64>,
    y0: DVector<f64>,
    s_n: f64,
    w0: Option<f64>,
}

impl Ergodic {
    pub fn new(dim_x: usize, y0: &DVector<f64>) -> Self {
        Ergodic {
            x_acc: DVector::zeros(dim_x),
            y_acc: DVector::zeros(y0.len()),
            y0: y0.clone(),
            s_n: 0.0,
            w0: None,
        }
    }

    pub fn add(&mut self, sigma: f64, theta: f64, x_next: &DVector<f64>, y_bar: &DVector<f64>) {
        self.w0.get_or_insert(sigma * theta);
        self.x_acc.axpy(sigma, x_next, 1.0);
        self.y_acc.axpy(sigma, y_bar, 1.0);
        self.s_n += sigma;
    }

    /// Sum of the accepted dual steps.
    pub fn s_n(&self) -> f64 {
        self.s_n
    }

    pub fn x_avg(&self) -> DVector<f64> {
        &self.x_acc / self.s_n
    }

    pub fn y_avg(&self) -> DVector<f64> {
        let w0 = self.w0.unwrap_or(0.0);
        (&self.y0 * w0 + &self.y_acc) / (w0 + self.s_n)
    }
}

/// Snapshot handed to observers after every accepted iteration.
pub struct IterateView<'a> {
    pub k: usize,
    /// `x^k`
    pub x_prev: &'a DVector<f64>,
    /// `x^{k+1}`
    pub x: &'a DVector<f64>,
    /// `y^{k-1}`
    pub y_prev: &'a DVector<f64>,
    /// `y^k`
    pub y: &'a DVector<f64>,
    pub y_bar: &'a DVector<f64>,
    pub sigma: f64,
    pub tau: f64,
    pub theta: f64,
    pub beta: f64,
    pub trials: usize,
    /// Left and right side of the breaking condition as evaluated for the
    /// accepted trial (`NaN` for fixed-step runs).
    pub lhs: f64,
    pub rhs: f64,
    pub metric: &'a CompactMetric,
    pub ergodic: &'a Ergodic,
}

pub type Observer<'o> = &'o mut dyn FnMut(&IterateView<'_>);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunStats {
    pub iterations: usize,
    pub converged: bool,
    pub wall_s: f64,
    /// Iterations whose metric prox failed and fell back to the scalar part.
    pub newton_fallbacks: usize,
    pub newton_iterations: usize,
    /// Entries floored into the domain of `h` by relaxed gradients.
    pub floor_hits: usize,
    pub safeguard_retained: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Last primal iterate `x^{N+1}`.
    pub x: DVector<f64>,
    /// Last dual iterate `y^N`.
    pub y: DVector<f64>,
    pub x_avg: DVector<f64>,
    pub y_avg: DVector<f64>,
    pub trace: ConvergenceRecord,
    pub stats: RunStats,
    /// Metrics used at each iteration when `record_metrics` is set.
    pub metrics: Vec<CompactMetric>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct EngineMode {
    pub quasi_newton: bool,
    pub fixed_sigma: Option<f64>,
    pub accelerated: bool,
}

/// Per-iteration products with `M^{-1}` (and `K M^{-1}` on the affine paths).
struct Directions {
    a: DVector<f64>,
    dy: DVector<f64>,
    gh: DVector<f64>,
    affine: Option<AffineParts>,
}

struct AffineParts {
    ka: DVector<f64>,
    kdy: DVector<f64>,
    kgh: DVector<f64>,
    kind: AffineKind,
}

enum AffineKind {
    Zero,
    Linear { minv_c: DVector<f64>, k_minv_c: DVector<f64> },
    Hyperplane {
        a: DVector<f64>,
        b: f64,
        minv_a: DVector<f64>,
        k_minv_a: DVector<f64>,
        a_minv_a: f64,
    },
}

impl Directions {
    fn new(
        problem: &SaddleProblem,
        metric: &CompactMetric,
        kty: &DVector<f64>,
        ktdy: &DVector<f64>,
        grad: &DVector<f64>,
    ) -> Result<Self> {
        let a = metric.apply_inverse(kty)?;
        let dy = metric.apply_inverse(ktdy)?;
        let gh = metric.apply_inverse(grad)?;
        let kind = match problem.g.kind() {
            ProxKind::Zero => Some(AffineKind::Zero),
            ProxKind::Linear { c } => {
                let minv_c = metric.apply_inverse(c)?;
                let k_minv_c = problem.k.apply(&minv_c);
                Some(AffineKind::Linear { minv_c, k_minv_c })
            }
            ProxKind::Hyperplane { a, b } => {
                let minv_a = metric.apply_inverse(a)?;
                Some(AffineKind::Hyperplane {
                    k_minv_a: problem.k.apply(&minv_a),
                    a_minv_a: a.dot(&minv_a),
                    a: a.clone(),
                    b: *b,
                    minv_a,
                })
            }
            _ => None,
        };
        let affine = kind.map(|kind| AffineParts {
            ka: problem.k.apply(&a),
            kdy: problem.k.apply(&dy),
            kgh: problem.k.apply(&gh),
            kind,
        });
        Ok(Directions { a, dy, gh, affine })
    }
}

enum Trial {
    Point(DVector<f64>, DVector<f64>),
    NewtonFailed,
}

fn trial_point(
    problem: &SaddleProblem,
    metric: &CompactMetric,
    prox: &mut MetricProx,
    dirs: &Directions,
    x: &DVector<f64>,
    kx: &DVector<f64>,
    tau: f64,
    theta: f64,
    newton_iterations: &mut usize,
) -> Result<Trial> {
    let mut v = x.clone();
    v.axpy(-tau, &dirs.a, 1.0);
    v.axpy(-tau * theta, &dirs.dy, 1.0);
    v.axpy(-tau, &dirs.gh, 1.0);

    if let Some(parts) = &dirs.affine {
        let mut kv = kx.clone();
        kv.axpy(-tau, &parts.ka, 1.0);
        kv.axpy(-tau * theta, &parts.kdy, 1.0);
        kv.axpy(-tau, &parts.kgh, 1.0);
        return Ok(match &parts.kind {
            AffineKind::Zero => Trial::Point(v, kv),
            AffineKind::Linear { minv_c, k_minv_c } => {
                v.axpy(-tau, minv_c, 1.0);
                kv.axpy(-tau, k_minv_c, 1.0);
                Trial::Point(v, kv)
            }
            AffineKind::Hyperplane {
                a,
                b,
                minv_a,
                k_minv_a,
                a_minv_a,
            } => {
                let coef = (b - v.dot(a)) / a_minv_a;
                v.axpy(coef, minv_a, 1.0);
                kv.axpy(coef, k_minv_a, 1.0);
                Trial::Point(v, kv)
            }
        });
    }

    let x_new = if let ProxKind::Quadratic { b } = problem.g.kind() {
        // (M + tau I) x = M v + tau b
        let mut rhs = metric.apply(&v)?;
        rhs.axpy(tau, b, 1.0);
        metric.solve_shifted(tau, &rhs)?
    } else {
        match prox.eval(metric, tau, &v) {
            Ok((p, stats)) => {
                *newton_iterations += stats.iterations;
                p
            }
            Err(Error::NewtonFailure { iterations, residual, .. }) => {
                *newton_iterations += iterations;
                debug!("metric prox failed (residual {residual:.3e}); falling back to scalar metric");
                prox.reset();
                return Ok(Trial::NewtonFailed);
            }
            Err(e) => return Err(e),
        }
    };
    let kx_new = problem.k.apply(&x_new);
    Ok(Trial::Point(x_new, kx_new))
}

fn gradient_at(problem: &SaddleProblem, x: &DVector<f64>, relaxed: bool, hits: &mut usize) -> Result<DVector<f64>> {
    if relaxed {
        let (g, n) = problem.h.gradient_relaxed(x);
        *hits += n;
        Ok(g)
    } else {
        problem.h.gradient(x)
    }
}

/// Breaking-condition sides, or `None` when `h` is not finite at `x_new`.
fn breaking_condition(
    problem: &SaddleProblem,
    metric: &CompactMetric,
    x: &DVector<f64>,
    x_new: &DVector<f64>,
    kx: &DVector<f64>,
    kx_new: &DVector<f64>,
    grad: &DVector<f64>,
    sigma: f64,
    tau: f64,
    delta: f64,
) -> Result<Option<(f64, f64)>> {
    let breg = match problem.h.bregman(x_new, x, grad) {
        Ok(b) if b.is_finite() => b,
        Ok(_) | Err(Error::Domain(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let lhs = tau * sigma * (kx_new - kx).norm_squared() + 2.0 * tau * breg;
    let rhs = delta * metric.m_norm_sq(&(x_new - x))?;
    Ok(Some((lhs, rhs)))
}

pub(crate) fn run_engine(
    problem: &SaddleProblem,
    cfg: &SolverConfig,
    mode: EngineMode,
    x1: &DVector<f64>,
    y0: &DVector<f64>,
    observer: Option<Observer<'_>>,
) -> Result<RunOutput> {
    cfg.validate()?;
    problem.check_start(x1, y0)?;
    let mut observer = observer;
    let n = problem.dim_x();
    let use_metric = mode.quasi_newton && cfg.memory > 0;
    let relaxed = mode.fixed_sigma.is_some();

    let (gamma, c_theta) = if mode.accelerated {
        let accel = cfg.accel.unwrap_or_default();
        let gamma = accel.gamma_strong.unwrap_or(problem.gamma_strong);
        if !(gamma > 0.0) {
            return Err(Error::InvalidConfig(
                "accelerated mode needs a positive strong convexity modulus".into(),
            ));
        }
        (gamma, accel.c_theta)
    } else {
        (0.0, 1.0)
    };
    let c_metric = if use_metric { cfg.c_m } else { 1.0 };

    let mut memory = LbfgsMemory::new(n, cfg.memory)
        .with_eps_curv(cfg.eps_curv)
        .with_scaling(cfg.base_scaling);
    let mut sequence = MetricSequence::new(cfg.metric_params(), cfg.safeguard)?;
    let mut metric = CompactMetric::identity(n);
    let mut prox = MetricProx::new(problem.g.clone(), cfg.newton)?;

    let mut stats = RunStats::default();
    let mut trace = ConvergenceRecord::new();
    let mut metrics = Vec::new();
    let mut ergodic = Ergodic::new(n, y0);

    let start = Instant::now();
    let mut excluded = Duration::ZERO;

    let mut x = x1.clone();
    let mut y_prev = y0.clone();
    let mut kx = problem.k.apply(&x);
    let mut grad = gradient_at(problem, &x, relaxed, &mut stats.floor_hits)?;
    let (mut sigma_prev, mut theta_prev) = match mode.fixed_sigma {
        Some(s) => (s, 1.0),
        None => (cfg.sigma0, cfg.theta0),
    };
    let mut beta_prev = cfg.beta;

    for k in 1..=cfg.max_iters {
        // (i)
        if use_metric && (k - 1) % cfg.metric_every == 0 {
            metric = sequence.next(&memory).map_err(|e| e.at(k))?;
        }
        if cfg.record_metrics {
            metrics.push(metric.clone());
        }

        // (ii)
        let mut y = y_prev.clone();
        y.axpy(sigma_prev, &kx, 1.0);
        let y = problem.fstar.prox(sigma_prev, 1.0, &y);
        let dual_res = (&y - &y_prev).norm() / sigma_prev;

        // (iii)
        let beta = if mode.accelerated {
            beta_prev / (1.0 + gamma / c_metric * beta_prev * sigma_prev).min(c_theta)
        } else {
            cfg.beta
        };
        let ratio = beta_prev / beta;
        let sigma_bar = match (mode.fixed_sigma, cfg.bar_sigma_rule) {
            (Some(s), _) => s,
            (None, BarSigmaRule::Conservative) => ratio * sigma_prev,
            (None, BarSigmaRule::Aggressive) => (1.0 + theta_prev).sqrt() * ratio * sigma_prev,
        };
        let kty = problem.k.adjoint(&y);
        let ktdy = problem.k.adjoint(&(&y - &y_prev));

        let mut dirs = Directions::new(problem, &metric, &kty, &ktdy, &grad).map_err(|e| e.at(k))?;
        let mut trials = 0;
        let mut power = 0;
        let accepted = loop {
            if trials >= cfg.ls_max_trials {
                return Err(Error::LineSearch { trials }.at(k));
            }
            trials += 1;
            let sigma = sigma_bar * cfg.mu.powi(power);
            let theta = sigma / sigma_prev;
            let tau = beta * sigma;
            let trial = trial_point(
                problem,
                &metric,
                &mut prox,
                &dirs,
                &x,
                &kx,
                tau,
                theta,
                &mut stats.newton_iterations,
            )
            .map_err(|e| e.at(k))?;
            let (x_new, kx_new) = match trial {
                Trial::Point(p, kp) => (p, kp),
                Trial::NewtonFailed => {
                    stats.newton_fallbacks += 1;
                    metric = metric.scalar_part();
                    if cfg.record_metrics {
                        *metrics.last_mut().expect("metric recorded") = metric.clone();
                    }
                    dirs = Directions::new(problem, &metric, &kty, &ktdy, &grad).map_err(|e| e.at(k))?;
                    power = 0;
                    continue;
                }
            };
            if mode.fixed_sigma.is_some() {
                break (x_new, kx_new, sigma, theta, tau, f64::NAN, f64::NAN);
            }
            match breaking_condition(problem, &metric, &x, &x_new, &kx, &kx_new, &grad, sigma, tau, cfg.delta)
                .map_err(|e| e.at(k))?
            {
                Some((lhs, rhs)) if lhs <= rhs => break (x_new, kx_new, sigma, theta, tau, lhs, rhs),
                _ => power += 1,
            }
        };
        let (x_new, kx_new, sigma, theta, tau, lhs, rhs) = accepted;
        let kx_new = if dirs.affine.is_some() { problem.k.apply(&x_new) } else { kx_new };

        let grad_new = gradient_at(problem, &x_new, relaxed, &mut stats.floor_hits).map_err(|e| e.at(k))?;
        let dx = &x_new - &x;
        if use_metric {
            memory.push_pair(dx.clone(), &grad_new - &grad)?;
        }
        let mut y_bar = y.clone();
        y_bar.axpy(theta, &(&y - &y_prev), 1.0);
        ergodic.add(sigma, theta, &x_new, &y_bar);
        let step_res = metric.m_norm_sq(&dx)?.max(0.0).sqrt() / tau;

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
                metric: &metric,
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
            rank: metric.rank(),
        });

        x = x_new;
        kx = kx_new;
        grad = grad_new;
        y_prev = y;
        sigma_prev = sigma;
        theta_prev = theta;
        beta_prev = beta;
        stats.iterations = k;

        if cfg.tol > 0.0 && step_res <= cfg.tol && dual_res <= cfg.tol {
            stats.converged = true;
            break;
        }
    }

    stats.safeguard_retained = sequence.retained();
    stats.wall_s = if cfg.wall_clock {
        (start.elapsed() - excluded).as_secs_f64()
    } else {
        0.0
    };
    if stats.newton_fallbacks > 0 {
        warn!("metric prox fell back to the scalar metric {} times", stats.newton_fallbacks);
    }
    Ok(RunOutput {
        x_avg: ergodic.x_avg(),
        y_avg: ergodic.y_avg(),
        x,
        y: y_prev,
        trace,
        stats,
        metrics,
    })
}
