//! Limited-memory quasi-Newton metrics of type "scalar plus low rank".

mod compact;
mod memory;
mod sequence;

pub use compact::{build_metric, CompactMetric, MetricParams};
pub use memory::{
    BaseScaling, CurvaturePair, LbfgsMemory, LowRankSplit, DEFAULT_EPS_CURV, SINGULAR_REL_TOL,
};
pub use sequence::{EtaSchedule, MetricSequence};
