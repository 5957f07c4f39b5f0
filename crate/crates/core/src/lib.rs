//! Quasi-Newton primal-dual algorithms for convex-concave saddle-point problems
//!
//! ```text
//! min_x max_y  <Kx, y> + g(x) + h(x) - f*(y)
//! ```
//!
//! The crate is organised in layers:
//!
//! * [`metric`] keeps limited-memory curvature pairs and turns them into a
//!   bounded, positive-definite "scalar plus low rank" metric.
//! * [`prox`] evaluates Euclidean proximal maps with generalized Jacobians and
//!   proximal maps under low-rank metrics by solving a small root-finding
//!   problem with a semi-smooth Newton method.
//! * [`solver`] runs the line-search primal-dual iteration with a variable
//!   metric (and its fixed-step, identity-metric and accelerated siblings).
//! * [`problems`] provides Poisson deblurring with total variation, and the
//!   small synthetic problems used by the tests.
//! * [`config`] parses the flat `key = value` configuration format.

pub mod config;
pub mod error;
pub mod linalg;
pub mod metric;
pub mod problems;
pub mod prox;
pub mod selftest;
pub mod solver;

pub use error::{Error, Result};
