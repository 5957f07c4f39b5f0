use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use qnpd::metric::{build_metric, EtaSchedule, LbfgsMemory, MetricParams, MetricSequence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| 2.0 * rng.random::<f64>() - 1.0)
}

fn spd(rng: &mut ChaCha8Rng, n: usize, spread: f64) -> DMatrix<f64> {
    let r = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
    &r * r.transpose() * spread + DMatrix::identity(n, n) * 0.05
}

fn filled_memory(seed: u64, n: usize, m: usize, spread: f64) -> LbfgsMemory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = spd(&mut rng, n, spread);
    let mut mem = LbfgsMemory::new(n, m);
    while mem.len() < m {
        let s = random_vec(&mut rng, n);
        let y = &a * &s;
        mem.push_pair(s, y).unwrap();
    }
    mem
}

fn extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let e = m.clone().symmetric_eigen().eigenvalues;
    (e.min(), e.max())
}

#[test]
fn two_pair_metric_matches_dense_bfgs_recursion() {
    let n = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = spd(&mut rng, n, 1.0);
    let pairs: Vec<_> = (0..2)
        .map(|_| {
            let s = random_vec(&mut rng, n);
            let y = &a * &s;
            (s, y)
        })
        .collect();
    let mut mem = LbfgsMemory::new(n, 2);
    for (s, y) in &pairs {
        mem.push_pair(s.clone(), y.clone()).unwrap();
    }
    let params = MetricParams {
        c_m: 1e6,
        ..MetricParams::default()
    };
    let got = build_metric(&mem, &params).unwrap().to_dense();
    let (s2, y2) = &pairs[1];
    let mut b = DMatrix::identity(n, n) * (s2.dot(y2) / y2.dot(y2));
    for (s, y) in &pairs {
        let bs = &b * s;
        b = &b - &bs * bs.transpose() / s.dot(&bs) + y * y.transpose() / s.dot(y);
    }
    let expected = b + DMatrix::identity(n, n) * params.alpha;
    assert!((&got - &expected).norm() <= 1e-10 * expected.norm());
}

#[test]
fn safeguarded_sequence_satisfies_the_ordering() {
    let n = 10;
    let params = MetricParams::default();
    let schedule = EtaSchedule::default();
    let mut seq = MetricSequence::new(params, Some(schedule)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut mem = LbfgsMemory::new(n, 4);
    let mut dense = Vec::new();
    for k in 0..60 {
        let a = spd(&mut rng, n, if k % 3 == 0 { 20.0 } else { 1.0 });
        let s = random_vec(&mut rng, n);
        let y = &a * &s;
        mem.push_pair(s, y).unwrap();
        dense.push(seq.next(&mem).unwrap().to_dense());
    }
    for (k, w) in dense.windows(2).enumerate() {
        let diff = &w[0] * (1.0 + schedule.eta(k + 1)) - &w[1];
        assert!(extremes(&((&diff + diff.transpose()) * 0.5)).0 >= -1e-10, "k = {}", k + 1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn spectrum_stays_in_the_window(seed: u64, n in 2usize..20, m in 1usize..6, spread in 0.1f64..100.0) {
        let params = MetricParams::default();
        let metric = build_metric(&filled_memory(seed, n, m, spread), &params).unwrap();
        let (lo, hi) = extremes(&metric.to_dense());
        prop_assert!(lo >= params.alpha - 1e-10 * hi);
        prop_assert!(hi <= params.c_m * (1.0 + 1e-10));
        // eigenvalue rounding scales with the norm, not with the smallest eigenvalue
        let tol = 1e-10 * hi;
        prop_assert!((metric.lambda_min() - lo).abs() <= tol, "{} vs {}", metric.lambda_min(), lo);
        prop_assert!((metric.lambda_max() - hi).abs() <= tol, "{} vs {}", metric.lambda_max(), hi);
    }

    #[test]
    fn inverse_and_norm_are_consistent(seed: u64, n in 2usize..20, m in 1usize..6, spread in 0.1f64..100.0) {
        let metric = build_metric(&filled_memory(seed, n, m, spread), &MetricParams::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a5a);
        let x = random_vec(&mut rng, n);
        let back = metric.apply(&metric.apply_inverse(&x).unwrap()).unwrap();
        prop_assert!((&back - &x).norm() <= 1e-10 * x.norm());
        let q = metric.m_norm_sq(&x).unwrap();
        prop_assert!((q - x.dot(&metric.apply(&x).unwrap())).abs() <= 1e-10 * q);
        prop_assert!(q >= 0.01 * x.norm_squared() * (1.0 - 1e-10));
    }

    #[test]
    fn shifted_solve_inverts_the_shifted_metric(seed: u64, n in 2usize..12, shift in 0.0f64..10.0) {
        let metric = build_metric(&filled_memory(seed, n, 3.min(n), 5.0), &MetricParams::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_vec(&mut rng, n);
        let z = metric.solve_shifted(shift, &x).unwrap();
        let back = metric.apply(&z).unwrap() + &z * shift;
        prop_assert!((back - &x).norm() <= 1e-10 * x.norm());
    }
}
