use nalgebra::DVector;

use super::function::ProxFunction;
use super::newton::{semismooth_newton, NewtonConfig, NewtonStats, RootProblem};
use crate::error::{check_dim, Error, Result};
use crate::metric::CompactMetric;

/// `argmin_x g(x) + |x - v|_M^2 / (2 tau)`.
///
/// `warm` seeds the Newton iteration; it is ignored when its length does not
/// match the rank of `M`. Returns the point, the multipliers `alpha*` and the
/// Newton statistics.
pub fn prox_metric(
    m: &CompactMetric,
    g: &ProxFunction,
    tau: f64,
    v: &DVector<f64>,
    cfg: &NewtonConfig,
    warm: Option<&DVector<f64>>,
) -> Result<(DVector<f64>, DVector<f64>, NewtonStats)> {
    check_dim(m.dim(), v.len())?;
    check_dim(g.dim(), v.len())?;
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument("prox step must be positive".into()));
    }
    let b0 = m.diag() / tau;
    if m.rank() == 0 {
        return Ok((g.prox(1.0, b0, v), DVector::zeros(0), NewtonStats::default()));
    }
    let s = tau.sqrt();
    let problem = RootProblem::new(v.clone(), m.w_pos() / s, m.w_neg() / s, b0, g)?;
    let r = m.rank();
    let alpha0 = match warm {
        Some(a) if a.len() == r => a.clone(),
        _ => DVector::zeros(r),
    };
    let (alpha, stats) = semismooth_newton(&problem, &alpha0, cfg)?;
    Ok((problem.prox_at(&alpha), alpha, stats))
}

/// Metric prox of a fixed `g` that remembers the last multipliers as a warm
/// start for the next call.
#[derive(Debug, Clone)]
pub struct MetricProx {
    g: ProxFunction,
    cfg: NewtonConfig,
    warm: Option<DVector<f64>>,
}

impl MetricProx {
    pub fn new(g: ProxFunction, cfg: NewtonConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(MetricProx { g, cfg, warm: None })
    }

    pub fn function(&self) -> &ProxFunction {
        &self.g
    }

    pub fn config(&self) -> &NewtonConfig {
        &self.cfg
    }

    pub fn reset(&mut self) {
        self.warm = None;
    }

    pub fn eval(&mut self, m: &CompactMetric, tau: f64, v: &DVector<f64>) -> Result<(DVector<f64>, NewtonStats)> {
        let (p, alpha, stats) = prox_metric(m, &self.g, tau, v, &self.cfg, self.warm.as_ref())?;
        if alpha.len() > 0 {
            self.warm = Some(alpha);
        }
        Ok((p, stats))
    }
}
