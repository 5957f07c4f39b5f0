use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use qnpd::linalg::{power_norm_sq, LinearOperator};
use qnpd::problems::{
    build_deblur_problem, kl_value, primal_objective, synthesize_observation, BlurOperator, DeblurSpec,
    DeblurVariant, GradOperator, Image, KlTerm,
};
use qnpd::solver::{run_pdal, SmoothFunction, SolverConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| 2.0 * rng.random::<f64>() - 1.0)
}

fn adjoint_gap(op: &dyn LinearOperator, rng: &mut ChaCha8Rng) -> f64 {
    let x = random_vec(rng, op.dim_in());
    let y = random_vec(rng, op.dim_out());
    let lhs = op.apply(&x).dot(&y);
    let rhs = x.dot(&op.adjoint(&y));
    (lhs - rhs).abs() / (op.apply(&x).norm() * y.norm())
}

/// Periodic blur as an explicit matrix, indexed independently of the operator.
fn dense_blur(w: usize, h: usize, r: usize, kernel: &[f64]) -> DMatrix<f64> {
    let side = 2 * r + 1;
    let mut a = DMatrix::zeros(w * h, w * h);
    for i in 0..h {
        for j in 0..w {
            for di in 0..side {
                for dj in 0..side {
                    let ii = (i + h + di - r) % h;
                    let jj = (j + w + dj - r) % w;
                    a[(i * w + j, ii * w + jj)] += kernel[di * side + dj];
                }
            }
        }
    }
    a
}

/// Forward differences with a zero last difference, one row per output entry.
fn dense_grad(w: usize, h: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(2 * w * h, w * h);
    for i in 0..h {
        for j in 0..w {
            let p = i * w + j;
            if j + 1 < w {
                d[(2 * p, p + 1)] = 1.0;
                d[(2 * p, p)] = -1.0;
            }
            if i + 1 < h {
                d[(2 * p + 1, p + w)] = 1.0;
                d[(2 * p + 1, p)] = -1.0;
            }
        }
    }
    d
}

#[test]
fn blur_and_gradient_adjoints() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let blur = BlurOperator::gaussian(16, 16, 2, 1.5).unwrap();
    let grad = GradOperator::new(16, 16);
    for _ in 0..10 {
        assert!(adjoint_gap(&blur, &mut rng) <= 1e-10);
        assert!(adjoint_gap(&grad, &mut rng) <= 1e-10);
    }
    let rect = GradOperator::new(7, 3);
    assert!(adjoint_gap(&rect, &mut rng) <= 1e-10);
}

#[test]
fn gradient_norm_is_below_eight() {
    let grad = GradOperator::new(16, 16);
    let est = power_norm_sq(&grad, 3000, 3);
    assert!(est <= 8.0 + 1e-9, "{est}");
    assert!(est > 7.5, "{est}");
}

#[test]
fn gradient_annihilates_constants_and_adjoint_sums_to_zero() {
    let grad = GradOperator::new(5, 4);
    assert_eq!(grad.apply(&DVector::from_element(20, 3.0)).amax(), 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let y = random_vec(&mut rng, 40);
    // D* y is orthogonal to constants for any y
    assert!(grad.adjoint(&y).sum().abs() < 1e-12);
}

#[test]
fn blur_preserves_mass() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let blur = BlurOperator::gaussian(12, 9, 3, 2.0).unwrap();
    let x = DVector::from_fn(108, |_, _| rng.random::<f64>() * 100.0);
    let y = blur.apply(&x);
    assert!((y.sum() - x.sum()).abs() <= 1e-10 * x.sum());
}

#[test]
fn blur_matches_dense_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let blur = BlurOperator::gaussian(6, 5, 2, 1.2).unwrap();
    let a = dense_blur(6, 5, 2, blur.kernel());
    let x = random_vec(&mut rng, 30);
    assert!((blur.apply(&x) - &a * &x).amax() < 1e-13);
    assert!((blur.adjoint(&x) - a.transpose() * &x).amax() < 1e-13);
}

#[test]
fn kl_value_matches_compensated_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let b = DVector::from_fn(16, |_, _| (rng.random::<f64>() * 50.0).floor());
        let z = DVector::from_fn(16, |_, _| 0.1 + rng.random::<f64>() * 60.0);
        let (mut sum, mut comp) = (0.0_f64, 0.0_f64);
        for i in 0..16 {
            let term = if b[i] > 0.0 { z[i] - b[i] * z[i].ln() } else { z[i] };
            let t = sum + term;
            comp += if sum.abs() >= term.abs() { (sum - t) + term } else { (term - t) + sum };
            sum = t;
        }
        let oracle = sum + comp;
        let got = kl_value(&b, &z).unwrap();
        assert!((got - oracle).abs() <= 1e-12 * oracle.abs().max(1.0), "{got} vs {oracle}");
    }
}

#[test]
fn kl_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let blur = Arc::new(BlurOperator::gaussian(8, 8, 2, 1.0).unwrap());
    let b = DVector::from_fn(64, |_, _| (rng.random::<f64>() * 30.0).floor());
    let h = KlTerm::new(blur, b).unwrap();
    let x = DVector::from_fn(64, |_, _| 0.5 + 10.0 * rng.random::<f64>());
    let g = h.gradient(&x).unwrap();
    let step = 1e-5;
    let fd = DVector::from_fn(64, |i, _| {
        let mut e = DVector::zeros(64);
        e[i] = step;
        (h.value(&(&x + &e)).unwrap() - h.value(&(&x - &e)).unwrap()) / (2.0 * step)
    });
    assert!((&g - &fd).norm() <= 1e-6 * g.norm(), "{:e}", (&g - &fd).norm() / g.norm());
}

#[test]
fn objective_matches_dense_operators() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let blur = BlurOperator::gaussian(8, 8, 2, 1.5).unwrap();
    let a = dense_blur(8, 8, 2, blur.kernel());
    let d = dense_grad(8, 8);
    let b = Image::new(8, 8, (0..64).map(|_| (rng.random::<f64>() * 40.0).floor()).collect()).unwrap();
    let spec = DeblurSpec {
        b: b.clone(),
        blur: Some(blur),
        tv_weight: 0.37,
        variant: DeblurVariant::TvDeblur,
    };
    for _ in 0..5 {
        let x = DVector::from_fn(64, |_, _| 0.5 + 30.0 * rng.random::<f64>());
        let z = &a * &x;
        let dx = &d * &x;
        let mut oracle = 0.0;
        for i in 0..64 {
            let bi = b.pixels()[i];
            oracle += z[i] - if bi > 0.0 { bi * z[i].ln() } else { 0.0 };
            oracle += 0.37 * (dx[2 * i].powi(2) + dx[2 * i + 1].powi(2)).sqrt();
        }
        let got = primal_objective(&spec, &x);
        assert!((got - oracle).abs() <= 1e-10 * oracle.abs(), "{got} vs {oracle}");
    }
}

#[test]
fn poisson_counts_have_the_right_spread() {
    let truth = Image::constant(1000, 1, 10_000.0).unwrap();
    let obs = synthesize_observation(&truth, None, 1.0, 11).unwrap();
    let px = obs.pixels();
    assert!(px.iter().all(|v| (v - 10_000.0).abs() <= 500.0));
    let mean = px.iter().sum::<f64>() / px.len() as f64;
    assert!((mean - 10_000.0).abs() <= 100.0, "{mean}");
    let var = px.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (px.len() - 1) as f64;
    assert!((var / 10_000.0 - 1.0).abs() < 0.15, "{var}");
}

#[test]
fn photon_factor_scales_the_mean() {
    let truth = Image::constant(500, 1, 20.0).unwrap();
    let obs = synthesize_observation(&truth, None, 10.0, 12).unwrap();
    let mean = obs.mean();
    assert!((mean - 200.0).abs() < 3.0, "{mean}");
    assert!(synthesize_observation(&truth, None, 0.0, 12).is_err());
}

#[test]
fn box_variant_has_strong_convexity_and_feasible_start() {
    let b = Image::new(2, 2, vec![0.0, 3.0, 300.0, 51.0]).unwrap();
    let spec = DeblurSpec {
        b,
        blur: None,
        tv_weight: 1.0,
        variant: DeblurVariant::DEFAULT_BOX,
    };
    let x1 = spec.initial_point();
    assert_eq!(x1.as_slice(), &[0.1, 3.0, 255.0, 51.0]);
    let p = build_deblur_problem(&spec).unwrap();
    assert_eq!(p.gamma_strong, 0.0);
    let spec = DeblurSpec {
        b: Image::new(2, 2, vec![2.0, 3.0, 300.0, 51.0]).unwrap(),
        ..spec
    };
    assert_eq!(build_deblur_problem(&spec).unwrap().gamma_strong, 2.0 / (255.0 * 255.0));
}

#[test]
fn converged_reference_is_locally_optimal() {
    let truth = Image::phantom(12, 12).unwrap();
    let blur = BlurOperator::gaussian(12, 12, 2, 1.5).unwrap();
    let b = synthesize_observation(&truth, Some(&blur), 1.0, 3).unwrap();
    let spec = DeblurSpec {
        tv_weight: DeblurSpec::default_tv_weight(&b),
        b,
        blur: Some(blur),
        variant: DeblurVariant::TvDeblur,
    };
    let problem = build_deblur_problem(&spec).unwrap();
    let cfg = SolverConfig {
        max_iters: 20_000,
        wall_clock: false,
        ..SolverConfig::default()
    };
    let out = run_pdal(&problem, &cfg, &spec.initial_point(), &DVector::zeros(problem.dim_y()), None).unwrap();
    let best = primal_objective(&spec, &out.x);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let d = random_vec(&mut rng, 144);
        let x = (&out.x + d * 0.5).map(|v| v.max(0.0));
        assert!(primal_objective(&spec, &x) >= best);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn blur_adjoint_identity_holds(w in 3usize..10, h in 3usize..10, r in 0usize..3, sigma in 0.3f64..3.0, seed: u64) {
        let blur = BlurOperator::gaussian(w, h, r, sigma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        prop_assert!(adjoint_gap(&blur, &mut rng) <= 1e-10);
    }

    #[test]
    fn objective_is_finite_exactly_on_positive_images(vals in proptest::collection::vec(0.0f64..50.0, 9)) {
        let b = Image::new(3, 3, vec![4.0; 9]).unwrap();
        let spec = DeblurSpec { b, blur: None, tv_weight: 0.5, variant: DeblurVariant::TvDeblur };
        let x = DVector::from_vec(vals.clone());
        let v = primal_objective(&spec, &x);
        prop_assert_eq!(v.is_finite(), vals.iter().all(|p| *p > 0.0));
    }
}
