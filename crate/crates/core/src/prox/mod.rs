//! Proximal maps: closed-form Euclidean ones with generalized Jacobians, and
//! proximal maps under "scalar plus low rank" metrics.

mod function;
mod jacobian;
mod metric_prox;
mod newton;

pub use function::{ProxFunction, ProxKind, FEASIBILITY_TOL};
pub use jacobian::ProxJacobian;
pub use metric_prox::{prox_metric, MetricProx};
pub use newton::{semismooth_newton, NewtonConfig, NewtonStats, RootProblem};
