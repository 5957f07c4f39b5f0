//! Primal-dual iterations for `min_x max_y <Kx, y> + g(x) + h(x) - f*(y)`.
//!
//! [`run_var_pdal`] is the line-search method with a quasi-Newton metric; the
//! other entry points are the fixed-step, identity-metric and accelerated
//! relatives used for comparison. All of them record a [`ConvergenceRecord`].

mod baseline;
mod config;
mod engine;
mod problem;
mod trace;

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

pub use baseline::{pdhg_sigma, run_pdal, run_pdhg_fixed};
pub use config::{AccelConfig, BarSigmaRule, SolverConfig};
pub use engine::{Ergodic, IterateView, Observer, RunOutput, RunStats};
pub use problem::{Objective, QuadraticSmooth, SaddleProblem, SmoothFunction, ZeroSmooth};
pub use trace::{ConvergenceRecord, TraceRow, TRACE_HEADER};

use engine::{run_engine, EngineMode};
use crate::error::{Error, Result};

/// Guaranteed lower bound on accepted dual steps:
/// `(-1 + sqrt(4 delta alpha / beta + 1)) / (2 L)`.
pub fn dual_step_floor(delta: f64, alpha: f64, beta: f64, l_hat: f64) -> f64 {
    if l_hat == 0.0 {
        return f64::INFINITY;
    }
    (-1.0 + (4.0 * delta * alpha / beta + 1.0).sqrt()) / (2.0 * l_hat)
}

/// `max(L_h, |K|)` for the problem under `cfg`.
pub fn l_hat(problem: &SaddleProblem, cfg: &SolverConfig) -> Result<f64> {
    Ok(baseline::lipschitz(problem, cfg)?.max(problem.operator_norm()))
}

/// Quasi-Newton metric with line search and constant `beta`. A memory of
/// size zero means the Euclidean metric.
pub fn run_var_pdal(
    problem: &SaddleProblem,
    cfg: &SolverConfig,
    x1: &DVector<f64>,
    y0: &DVector<f64>,
    observer: Option<Observer<'_>>,
) -> Result<RunOutput> {
    let mode = EngineMode {
        quasi_newton: true,
        fixed_sigma: None,
        accelerated: false,
    };
    run_engine(problem, cfg, mode, x1, y0, observer)
}

/// Quasi-Newton metric with the fixed step [`dual_step_floor`] (with `cfg.alpha`)
/// unless `cfg.sigma_fixed` is set.
pub fn run_var_pdhg(
    problem: &SaddleProblem,
    cfg: &SolverConfig,
    x1: &DVector<f64>,
    y0: &DVector<f64>,
    observer: Option<Observer<'_>>,
) -> Result<RunOutput> {
    let sigma = match cfg.sigma_fixed {
        Some(s) => s,
        None => dual_step_floor(cfg.delta, cfg.alpha, cfg.beta, l_hat(problem, cfg)?),
    };
    if !sigma.is_finite() {
        return Err(Error::InvalidConfig("cannot derive a finite fixed step; set sigma_fixed".into()));
    }
    let mode = EngineMode {
        quasi_newton: true,
        fixed_sigma: Some(sigma),
        accelerated: false,
    };
    run_engine(problem, cfg, mode, x1, y0, observer)
}

/// Line search with `beta_k = beta_{k-1} / min{1 + (gamma / C_M) beta_{k-1} sigma_{k-1}, C_theta}`.
/// Uses the quasi-Newton metric when `cfg.memory > 0`, the Euclidean one otherwise.
pub fn run_accelerated(
    problem: &SaddleProblem,
    cfg: &SolverConfig,
    x1: &DVector<f64>,
    y0: &DVector<f64>,
    observer: Option<Observer<'_>>,
) -> Result<RunOutput> {
    let mode = EngineMode {
        quasi_newton: true,
        fixed_sigma: None,
        accelerated: true,
    };
    run_engine(problem, cfg, mode, x1, y0, observer)
}

/// `P(x) + D(y)` relative to a saddle point `(xs, ys)`.
pub fn primal_dual_gap(
    problem: &SaddleProblem,
    x: &DVector<f64>,
    y: &DVector<f64>,
    xs: &DVector<f64>,
    ys: &DVector<f64>,
) -> Result<f64> {
    let p = problem.g.value(x)? + problem.h.value(x)? - problem.g.value(xs)? - problem.h.value(xs)?
        + problem.k.adjoint(ys).dot(&(x - xs));
    let d = problem.fstar.value(y)? - problem.fstar.value(ys)? - problem.k.apply(xs).dot(&(y - ys));
    Ok(p + d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Solver {
    Pdhg,
    Pdal,
    VarPdhg,
    VarPdal,
    Apdal,
    VarApdal,
}

impl Solver {
    pub const ALL: [Solver; 6] = [
        Solver::Pdhg,
        Solver::Pdal,
        Solver::VarPdhg,
        Solver::VarPdal,
        Solver::Apdal,
        Solver::VarApdal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Solver::Pdhg => "pdhg",
            Solver::Pdal => "pdal",
            Solver::VarPdhg => "var_pdhg",
            Solver::VarPdal => "var_pdal",
            Solver::Apdal => "apdal",
            Solver::VarApdal => "var_apdal",
        }
    }

    pub fn uses_metric(self) -> bool {
        matches!(self, Solver::VarPdhg | Solver::VarPdal | Solver::VarApdal)
    }

    pub fn run(
        self,
        problem: &SaddleProblem,
        cfg: &SolverConfig,
        x1: &DVector<f64>,
        y0: &DVector<f64>,
        observer: Option<Observer<'_>>,
    ) -> Result<RunOutput> {
        match self {
            Solver::Pdhg => run_pdhg_fixed(problem, cfg, x1, y0, observer),
            Solver::Pdal => run_pdal(problem, cfg, x1, y0, observer),
            Solver::VarPdhg => run_var_pdhg(problem, cfg, x1, y0, observer),
            Solver::VarPdal => run_var_pdal(problem, cfg, x1, y0, observer),
            Solver::Apdal => {
                let cfg = SolverConfig {
                    memory: 0,
                    ..cfg.clone()
                };
                run_accelerated(problem, &cfg, x1, y0, observer)
            }
            Solver::VarApdal => run_accelerated(problem, cfg, x1, y0, observer),
        }
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Solver::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown solver {s:?}")))
    }
}
