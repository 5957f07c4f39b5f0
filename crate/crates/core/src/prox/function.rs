use nalgebra::DVector;

use super::jacobian::ProxJacobian;
use crate::error::{check_dim, Error, Result};

/// Slack used when deciding membership for indicator functions.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Nonsmooth terms with closed-form Euclidean proximal maps.
#[derive(Debug, Clone, PartialEq)]
pub enum ProxKind {
    Zero,
    NonNeg,
    Box { lo: DVector<f64>, hi: DVector<f64> },
    /// Indicator of `{ y : |y_group|_2 <= radius for every group }`, groups
    /// being consecutive blocks of `group` entries.
    L2InfBall { radius: f64, group: usize },
    /// `<c, x>`
    Linear { c: DVector<f64> },
    /// `0.5 |x - b|^2`
    Quadratic { b: DVector<f64> },
    /// Indicator of `{ x : <a, x> = b }`
    Hyperplane { a: DVector<f64>, b: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxFunction {
    kind: ProxKind,
    dim: usize,
}

impl ProxFunction {
    pub fn zero(dim: usize) -> Self {
        ProxFunction {
            kind: ProxKind::Zero,
            dim,
        }
    }

    pub fn nonneg(dim: usize) -> Self {
        ProxFunction {
            kind: ProxKind::NonNeg,
            dim,
        }
    }

    pub fn box_indicator(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        check_dim(lo.len(), hi.len())?;
        if lo.iter().zip(hi.iter()).any(|(l, h)| !(l <= h)) {
            return Err(Error::InvalidArgument("box requires lo <= hi".into()));
        }
        Ok(ProxFunction {
            dim: lo.len(),
            kind: ProxKind::Box { lo, hi },
        })
    }

    pub fn uniform_box(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::box_indicator(DVector::from_element(dim, lo), DVector::from_element(dim, hi))
    }

    pub fn l2inf_ball(dim: usize, radius: f64, group: usize) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidArgument("ball radius must be positive".into()));
        }
        if group == 0 || dim % group != 0 {
            return Err(Error::InvalidArgument(format!(
                "dimension {dim} is not divisible by group size {group}"
            )));
        }
        Ok(ProxFunction {
            kind: ProxKind::L2InfBall { radius, group },
            dim,
        })
    }

    pub fn linear(c: DVector<f64>) -> Self {
        ProxFunction {
            dim: c.len(),
            kind: ProxKind::Linear { c },
        }
    }

    pub fn quadratic(b: DVector<f64>) -> Self {
        ProxFunction {
            dim: b.len(),
            kind: ProxKind::Quadratic { b },
        }
    }

    pub fn hyperplane(a: DVector<f64>, b: f64) -> Result<Self> {
        if a.norm_squared() == 0.0 {
            return Err(Error::InvalidArgument("hyperplane normal must be nonzero".into()));
        }
        Ok(ProxFunction {
            dim: a.len(),
            kind: ProxKind::Hyperplane { a, b },
        })
    }

    pub fn kind(&self) -> &ProxKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Linear, quadratic and hyperplane terms have affine proximal maps under
    /// any metric.
    pub fn is_affine(&self) -> bool {
        matches!(
            self.kind,
            ProxKind::Zero | ProxKind::Linear { .. } | ProxKind::Quadratic { .. } | ProxKind::Hyperplane { .. }
        )
    }

    /// Function value; indicators return `+inf` outside their set (with a
    /// relative slack of [`FEASIBILITY_TOL`]).
    pub fn value(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        let feasible = match &self.kind {
            ProxKind::Zero => return Ok(0.0),
            ProxKind::Linear { c } => return Ok(c.dot(x)),
            ProxKind::Quadratic { b } => return Ok(0.5 * (x - b).norm_squared()),
            ProxKind::NonNeg => x.iter().all(|&v| v >= -FEASIBILITY_TOL * (1.0 + v.abs())),
            ProxKind::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi.iter())).all(|(&v, (&l, &h))| {
                v >= l - FEASIBILITY_TOL * (1.0 + l.abs()) && v <= h + FEASIBILITY_TOL * (1.0 + h.abs())
            }),
            ProxKind::L2InfBall { radius, group } => x
                .as_slice()
                .chunks(*group)
                .all(|g| g.iter().map(|v| v * v).sum::<f64>().sqrt() <= radius * (1.0 + FEASIBILITY_TOL)),
            ProxKind::Hyperplane { a, b } => {
                (a.dot(x) - b).abs() <= FEASIBILITY_TOL * (1.0 + b.abs() + a.norm() * x.norm())
            }
        };
        Ok(if feasible { 0.0 } else { f64::INFINITY })
    }

    /// `argmin_x g(x) + scale / (2 tau) |x - v|^2`.
    pub fn prox(&self, tau: f64, scale: f64, v: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(v.len(), self.dim);
        match &self.kind {
            ProxKind::Zero => v.clone(),
            ProxKind::NonNeg => v.map(|t| t.max(0.0)),
            ProxKind::Box { lo, hi } => DVector::from_iterator(
                v.len(),
                v.iter().zip(lo.iter().zip(hi.iter())).map(|(&t, (&l, &h))| t.clamp(l, h)),
            ),
            ProxKind::L2InfBall { radius, group } => {
                let mut out = v.clone();
                for chunk in out.as_mut_slice().chunks_mut(*group) {
                    let norm = chunk.iter().map(|t| t * t).sum::<f64>().sqrt();
                    if norm > *radius {
                        let f = radius / norm;
                        chunk.iter_mut().for_each(|t| *t *= f);
                    }
                }
                out
            }
            ProxKind::Linear { c } => v - c * (tau / scale),
            ProxKind::Quadratic { b } => (v * scale + b * tau) / (scale + tau),
            ProxKind::Hyperplane { a, b } => v + a * ((b - v.dot(a)) / a.norm_squared()),
        }
    }

    /// An element of the Clarke Jacobian of `v -> prox(tau, scale, v)`.
    /// At kinks the inactive (interior) branch is chosen.
    pub fn jacobian(&self, tau: f64, scale: f64, v: &DVector<f64>) -> ProxJacobian {
        match &self.kind {
            ProxKind::Zero | ProxKind::Linear { .. } => ProxJacobian::Identity,
            ProxKind::NonNeg => ProxJacobian::Mask(v.iter().map(|&t| t >= 0.0).collect()),
            ProxKind::Box { lo, hi } => ProxJacobian::Mask(
                v.iter()
                    .zip(lo.iter().zip(hi.iter()))
                    .map(|(&t, (&l, &h))| t >= l && t <= h)
                    .collect(),
            ),
            ProxKind::L2InfBall { radius, group } => {
                let blocks = v
                    .as_slice()
                    .chunks(*group)
                    .map(|chunk| {
                        let norm = chunk.iter().map(|t| t * t).sum::<f64>().sqrt();
                        if norm <= *radius {
                            None
                        } else {
                            let unit: Vec<f64> = chunk.iter().map(|t| t / norm).collect();
                            Some((radius / norm, unit))
                        }
                    })
                    .collect();
                ProxJacobian::BallBlocks { group: *group, blocks }
            }
            ProxKind::Quadratic { .. } => ProxJacobian::Scaled(scale / (scale + tau)),
            ProxKind::Hyperplane { a, .. } => ProxJacobian::Projector(a / a.norm()),
        }
    }
}
