//! Embedded invariant checks run by `qnpd selftest`.
//!
//! Every check draws its data from a fixed seed, so the rendered report is
//! byte-identical between runs on the same platform.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{power_norm_sq, symmetric_extremes, LinearOperator};
use crate::metric::{build_metric, CompactMetric, LbfgsMemory, MetricParams};
use crate::problems::{BlurOperator, GradOperator, KlTerm};
use crate::prox::{prox_metric, NewtonConfig, ProxFunction};
use crate::solver::SmoothFunction;

#[derive(Debug, Clone, Copy, Default)]
pub struct SelftestOptions {
    pub seed: u64,
    /// Negates the data-term gradient before it is checked.
    pub corrupt_gradient: bool,
}

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(s, "{status} {:<16} value={:.3e} tol={:.1e}", c.name, c.value, c.tolerance);
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        let _ = writeln!(s, "{} checks, {failed} failed", self.checks.len());
        s
    }

    fn push(&mut self, name: &'static str, value: f64, tolerance: f64) {
        self.checks.push(Check {
            name,
            value,
            tolerance,
            passed: value <= tolerance,
        });
    }
}

pub fn run(opts: &SelftestOptions) -> Report {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = Report::default();

    let blur = BlurOperator::gaussian(16, 16, 2, 1.5).expect("valid kernel");
    report.push("blur_adjoint", adjoint_error(&blur, &mut rng), 1e-10);
    let grad = GradOperator::new(16, 16);
    report.push("grad_adjoint", adjoint_error(&grad, &mut rng), 1e-10);
    report.push("grad_norm", power_norm_sq(&grad, 500, opts.seed) - GradOperator::NORM_SQ_BOUND, 1e-9);
    report.push("kl_gradient", kl_gradient_error(&mut rng, opts.corrupt_gradient), 1e-6);
    report.push("prox_oracle", prox_oracle_error(&mut rng), 1e-8);
    let (apply_err, spectrum_err) = metric_errors(&mut rng);
    report.push("metric_apply", apply_err, 1e-10);
    report.push("metric_spectrum", spectrum_err, 1e-10);
    report
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| 2.0 * rng.random::<f64>() - 1.0)
}

fn adjoint_error(op: &dyn LinearOperator, rng: &mut ChaCha8Rng) -> f64 {
    let x = random_vec(rng, op.dim_in());
    let y = random_vec(rng, op.dim_out());
    let lhs = op.apply(&x).dot(&y);
    let rhs = x.dot(&op.adjoint(&y));
    (lhs - rhs).abs() / (op.apply(&x).norm() * y.norm()).max(f64::MIN_POSITIVE)
}

/// Largest relative error of directional derivatives against central differences.
fn kl_gradient_error(rng: &mut ChaCha8Rng, corrupt: bool) -> f64 {
    let blur = BlurOperator::gaussian(8, 8, 2, 1.0).expect("valid kernel");
    let b = DVector::from_fn(64, |_, _| (20.0 * rng.random::<f64>()).floor());
    let h = KlTerm::new(Arc::new(blur), b).expect("valid observation");
    let x = DVector::from_fn(64, |_, _| 1.0 + 10.0 * rng.random::<f64>());
    let mut g = h.gradient(&x).expect("interior point");
    if corrupt {
        g = -g;
    }
    let step = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let d = random_vec(rng, 64);
        let fd = (h.value(&(&x + &d * step)).unwrap() - h.value(&(&x - &d * step)).unwrap()) / (2.0 * step);
        let an = g.dot(&d);
        worst = worst.max((fd - an).abs() / an.abs().max(fd.abs()).max(1.0));
    }
    worst
}

fn random_metric(rng: &mut ChaCha8Rng, n: usize, pairs: usize) -> CompactMetric {
    let r = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
    let a = &r * r.transpose() + DMatrix::identity(n, n) * 0.5;
    let mut mem = LbfgsMemory::new(n, pairs);
    while mem.len() < pairs {
        let s = random_vec(rng, n);
        let y = &a * &s;
        mem.push_pair(s, y).expect("matching dimensions");
    }
    build_metric(&mem, &MetricParams::default()).expect("default parameters")
}

/// Box-constrained metric prox against projected gradient on the dense model.
fn prox_oracle_error(rng: &mut ChaCha8Rng) -> f64 {
    let n = 6;
    let m = random_metric(rng, n, 2);
    let g = ProxFunction::uniform_box(n, -0.5, 0.5).expect("valid box");
    let tau = 0.7;
    let v = random_vec(rng, n) * 0.8;
    let p = match prox_metric(&m, &g, tau, &v, &NewtonConfig::default(), None) {
        Ok((p, _, _)) => p,
        Err(_) => return f64::INFINITY,
    };
    let dense = m.to_dense();
    let lmax = symmetric_extremes(&dense).1;
    let mut x = g.prox(1.0, 1.0, &v);
    for _ in 0..1_000_000 {
        let next = g.prox(1.0, 1.0, &(&x - &dense * (&x - &v) / lmax));
        let done = (&next - &x).norm() <= 1e-12;
        x = next;
        if done {
            break;
        }
    }
    (p - x).amax()
}

/// Returns the relative apply error against the dense matrix and the largest
/// violation of the eigenvalue window `[alpha, c_m]`.
fn metric_errors(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let params = MetricParams::default();
    let m = random_metric(rng, 16, 5);
    let dense = m.to_dense();
    let x = random_vec(rng, 16);
    let fast = m.apply(&x).expect("matching dimensions");
    let apply_err = (&fast - &dense * &x).norm() / fast.norm();
    let (lo, hi) = symmetric_extremes(&dense);
    let spectrum_err = ((params.alpha - lo) / params.alpha).max((hi - params.c_m) / params.c_m).max(0.0);
    (apply_err, spectrum_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn passes_and_is_deterministic() {
        let a = run(&SelftestOptions::default());
        assert!(a.all_passed(), "{}", a.render());
        assert_eq!(a.render(), run(&SelftestOptions::default()).render());
    }

    #[test]
    fn corrupted_gradient_fails() {
        let r = run(&SelftestOptions {
            corrupt_gradient: true,
            ..Default::default()
        });
        assert!(!r.all_passed());
        let failed: Vec<_> = r.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
        assert_eq!(failed, vec!["kl_gradient"]);
    }
}
