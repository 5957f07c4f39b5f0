use std::sync::Arc;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use super::image::Image;
use super::kl::{kl_value, KlTerm};
use super::operators::{BlurOperator, GradOperator};
use crate::error::{Error, Result};
use crate::linalg::{IdentityOperator, LinearOperator};
use crate::prox::ProxFunction;
use crate::solver::SaddleProblem;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeblurVariant {
    /// Nonnegativity constraint, blurred data term.
    TvDeblur,
    /// Box constraint, no blur; strongly convex on the box.
    StronglyConvexBox { lo: f64, hi: f64 },
}

impl DeblurVariant {
    pub const DEFAULT_BOX: DeblurVariant = DeblurVariant::StronglyConvexBox { lo: 0.1, hi: 255.0 };
}

#[derive(Debug, Clone)]
pub struct DeblurSpec {
    pub b: Image,
    /// Ignored by the box variant, which always uses the identity.
    pub blur: Option<BlurOperator>,
    pub tv_weight: f64,
    pub variant: DeblurVariant,
}

impl DeblurSpec {
    /// `tv_weight = 0.01 * mean(b)`.
    pub fn default_tv_weight(b: &Image) -> f64 {
        0.01 * b.mean()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tv_weight > 0.0) {
            return Err(Error::InvalidArgument("tv_weight must be positive".into()));
        }
        if let DeblurVariant::StronglyConvexBox { lo, hi } = self.variant {
            if !(lo > 0.0 && lo < hi) {
                return Err(Error::InvalidArgument("box variant needs 0 < lo < hi".into()));
            }
        }
        if let (DeblurVariant::TvDeblur, Some(blur)) = (&self.variant, &self.blur) {
            if blur.dim_in() != self.b.len() {
                return Err(Error::DimensionMismatch {
                    expected: self.b.len(),
                    got: blur.dim_in(),
                });
            }
        }
        Ok(())
    }

    pub fn data_operator(&self) -> Arc<dyn LinearOperator> {
        match (&self.variant, &self.blur) {
            (DeblurVariant::TvDeblur, Some(blur)) => Arc::new(blur.clone()),
            _ => Arc::new(IdentityOperator(self.b.len())),
        }
    }

    pub fn grad_operator(&self) -> GradOperator {
        GradOperator::new(self.b.width(), self.b.height())
    }

    pub fn primal_constraint(&self) -> ProxFunction {
        let n = self.b.len();
        match self.variant {
            DeblurVariant::TvDeblur => ProxFunction::nonneg(n),
            DeblurVariant::StronglyConvexBox { lo, hi } => {
                ProxFunction::uniform_box(n, lo, hi).expect("validated box bounds")
            }
        }
    }

    /// The observation projected onto the constraint set.
    pub fn initial_point(&self) -> DVector<f64> {
        self.primal_constraint().prox(1.0, 1.0, &self.b.to_vector())
    }

    /// `min_i b_i / hi^2` for the box variant, `0` otherwise.
    pub fn strong_convexity(&self) -> f64 {
        match self.variant {
            DeblurVariant::TvDeblur => 0.0,
            DeblurVariant::StronglyConvexBox { hi, .. } => self.b.min() / (hi * hi),
        }
    }
}

/// `KL(b, A x) + tv_weight * sum_p |(D x)_p|_2`, `+inf` outside the constraint
/// set or the domain of the data term.
pub fn primal_objective(spec: &DeblurSpec, x: &DVector<f64>) -> f64 {
    objective_parts(
        &spec.data_operator(),
        &spec.grad_operator(),
        &spec.primal_constraint(),
        &spec.b.to_vector(),
        spec.tv_weight,
        x,
    )
}

fn objective_parts(
    a: &Arc<dyn LinearOperator>,
    d: &GradOperator,
    g: &ProxFunction,
    b: &DVector<f64>,
    tv_weight: f64,
    x: &DVector<f64>,
) -> f64 {
    match g.value(x) {
        Ok(v) if v.is_finite() => {}
        _ => return f64::INFINITY,
    }
    let data = match kl_value(b, &a.apply(x)) {
        Ok(v) => v,
        Err(_) => return f64::INFINITY,
    };
    let dx = d.apply(x);
    let tv: f64 = dx.as_slice().chunks(2).map(|p| (p[0] * p[0] + p[1] * p[1]).sqrt()).sum();
    data + tv_weight * tv
}

/// The saddle problem with `K = D`, `f*` the indicator of the pixelwise
/// `tv_weight`-ball, `h = KL(b, A .)` and `g` the variant's constraint.
/// The Lipschitz constant of `grad h` is estimated at [`DeblurSpec::initial_point`].
pub fn build_deblur_problem(spec: &DeblurSpec) -> Result<SaddleProblem> {
    spec.validate()?;
    let n = spec.b.len();
    let a = spec.data_operator();
    let d = spec.grad_operator();
    let b = spec.b.to_vector();
    let kl = KlTerm::new(a.clone(), b.clone())?;
    let lipschitz = kl.local_curvature(&spec.initial_point());
    let g = spec.primal_constraint();
    let fstar = ProxFunction::l2inf_ball(2 * n, spec.tv_weight, 2)?;
    let tv_weight = spec.tv_weight;
    let g_obj = g.clone();
    let objective = move |x: &DVector<f64>| objective_parts(&a, &d, &g_obj, &b, tv_weight, x);
    Ok(SaddleProblem::new(Box::new(d), Box::new(kl), g, fstar)?
        .with_norm_k(GradOperator::NORM_SQ_BOUND.sqrt())
        .with_lipschitz_h(lipschitz)
        .with_gamma_strong(spec.strong_convexity())
        .with_objective(Box::new(objective)))
}

/// Poisson counts with mean `A (photons * truth)`. Pixel `i` draws from a
/// generator seeded with `seed` on stream `i`, so results do not depend on
/// traversal order or platform.
pub fn synthesize_observation(
    truth: &Image,
    blur: Option<&BlurOperator>,
    photons: f64,
    seed: u64,
) -> Result<Image> {
    if !(photons > 0.0) {
        return Err(Error::InvalidArgument("photon factor must be positive".into()));
    }
    let scaled = truth.to_vector() * photons;
    let mean = match blur {
        Some(op) => op.apply(&scaled),
        None => scaled,
    };
    let mut counts = Vec::with_capacity(mean.len());
    for (i, &m) in mean.iter().enumerate() {
        if m <= 0.0 {
            counts.push(0.0);
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let dist = Poisson::new(m).map_err(|e| Error::InvalidArgument(format!("poisson mean {m}: {e}")))?;
        counts.push(dist.sample(&mut rng));
    }
    Image::new(truth.width(), truth.height(), counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_has_no_total_variation() {
        let b = Image::constant(2, 2, 5.0).unwrap();
        let spec = DeblurSpec {
            b,
            blur: None,
            tv_weight: 1.0,
            variant: DeblurVariant::TvDeblur,
        };
        let p = build_deblur_problem(&spec).unwrap();
        let x = DVector::from_element(4, 3.0);
        assert_eq!(p.k.apply(&x), DVector::zeros(8));
    }

    #[test]
    fn objective_of_constant_matches_closed_form() {
        let b = Image::constant(3, 3, 2.0).unwrap();
        let spec = DeblurSpec {
            b,
            blur: None,
            tv_weight: 0.7,
            variant: DeblurVariant::TvDeblur,
        };
        let x = DVector::from_element(9, 2.0);
        let expected = 9.0 * 2.0 * (1.0 - 2f64.ln());
        assert!((primal_objective(&spec, &x) - expected).abs() < 1e-12);
        let mut bad = x.clone();
        bad[0] = -1.0;
        assert_eq!(primal_objective(&spec, &bad), f64::INFINITY);
    }

    #[test]
    fn zero_truth_gives_zero_counts() {
        let truth = Image::constant(4, 4, 0.0).unwrap();
        let blur = BlurOperator::gaussian(4, 4, 2, 1.5).unwrap();
        let obs = synthesize_observation(&truth, Some(&blur), 1.0, 9).unwrap();
        assert!(obs.pixels().iter().all(|p| *p == 0.0));
    }

    #[test]
    fn observation_is_deterministic() {
        let truth = Image::phantom(8, 8).unwrap();
        let a = synthesize_observation(&truth, None, 1.0, 42).unwrap();
        let b = synthesize_observation(&truth, None, 1.0, 42).unwrap();
        let c = synthesize_observation(&truth, None, 1.0, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
