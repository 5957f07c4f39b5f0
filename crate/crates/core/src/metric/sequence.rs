use log::debug;

use super::compact::{weighted_extremes, CompactMetric, MetricParams};
use super::memory::LbfgsMemory;
use crate::error::Result;
use crate::linalg::spectral_norm_sq;

/// Summable sequence `eta_k = eta0 / k^power`, `k >= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaSchedule {
    pub eta0: f64,
    pub power: f64,
}

impl Default for EtaSchedule {
    fn default() -> Self {
        EtaSchedule {
            eta0: 1.0,
            power: 2.0,
        }
    }
}

impl EtaSchedule {
    pub fn eta(&self, k: usize) -> f64 {
        self.eta0 / (k.max(1) as f64).powf(self.power)
    }
}

/// Produces the metric for each outer iteration.
///
/// Without a safeguard this is [`CompactMetric::from_split`] with the fixed
/// gamma weights. With a safeguard schedule, the weights become
/// `g_i = eta_k / |U_i|_2^2`, and the low-rank part is additionally shrunk
/// until `lambda_max(M_k) <= (1 + eta_{k-1}) lambda_min(M_{k-1})`, which
/// implies `(1 + eta_{k-1}) M_{k-1} - M_k` is positive semi-definite. If even
/// the pure scalar candidate violates the bound, the previous metric is kept.
#[derive(Debug, Clone)]
pub struct MetricSequence {
    params: MetricParams,
    safeguard: Option<EtaSchedule>,
    previous: Option<CompactMetric>,
    index: usize,
    retained: usize,
}

impl MetricSequence {
    pub fn new(params: MetricParams, safeguard: Option<EtaSchedule>) -> Result<Self> {
        params.validate()?;
        Ok(MetricSequence {
            params,
            safeguard,
            previous: None,
            index: 0,
            retained: 0,
        })
    }

    pub fn params(&self) -> &MetricParams {
        &self.params
    }

    /// Index of the most recently produced metric (1-based).
    pub fn index(&self) -> usize {
        self.index
    }

    /// How often the safeguard kept the previous metric unchanged.
    pub fn retained(&self) -> usize {
        self.retained
    }

    pub fn eta(&self, k: usize) -> Option<f64> {
        self.safeguard.map(|s| s.eta(k))
    }

    pub fn next(&mut self, mem: &LbfgsMemory) -> Result<CompactMetric> {
        self.index += 1;
        let metric = match self.safeguard {
            None => CompactMetric::from_split(&mem.split(), &self.params)?,
            Some(schedule) => self.safeguarded(mem, schedule)?,
        };
        self.previous = Some(metric.clone());
        Ok(metric)
    }

    fn safeguarded(&mut self, mem: &LbfgsMemory, schedule: EtaSchedule) -> Result<CompactMetric> {
        let k = self.index;
        let eta = schedule.eta(k);
        let split = mem.split();
        let g1 = weight(eta, spectral_norm_sq(&split.u1));
        let g2 = weight(eta, spectral_norm_sq(&split.u2));

        let Some(prev) = &self.previous else {
            let params = MetricParams {
                gamma1: g1,
                gamma2: g2,
                ..self.params
            };
            return CompactMetric::from_split(&split, &params);
        };
        let bound = (1.0 + schedule.eta(k - 1)) * prev.lambda_min();

        // Largest eigenvalue of the clamped metric when the weights are t*g.
        let top = |t: f64| -> Option<f64> {
            let (lo, hi) = weighted_extremes(&split, t * g1, t * g2);
            if !(lo > 0.0) || !hi.is_finite() {
                return None;
            }
            let c = ((self.params.c_m - self.params.alpha) / hi.max(lo.abs())).min(1.0);
            Some(c * hi + self.params.alpha)
        };
        let fits = |t: f64| top(t).is_some_and(|v| v <= bound);

        let t = if fits(1.0) {
            1.0
        } else if !fits(0.0) {
            self.retained += 1;
            debug!("metric safeguard: keeping previous metric at k = {k}");
            return Ok(prev.clone());
        } else {
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if fits(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };
        let params = MetricParams {
            gamma1: t * g1,
            gamma2: t * g2,
            ..self.params
        };
        CompactMetric::from_split(&split, &params)
    }
}

fn weight(eta: f64, norm_sq: f64) -> f64 {
    if norm_sq > 0.0 {
        eta / norm_sq
    } else {
        0.0
    }
}
