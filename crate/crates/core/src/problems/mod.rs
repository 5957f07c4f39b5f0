//! Poisson deblurring with total variation, and small synthetic problems.

mod deblur;
mod image;
mod kl;
mod operators;
mod toys;

pub use deblur::{build_deblur_problem, primal_objective, synthesize_observation, DeblurSpec, DeblurVariant};
pub use image::Image;
pub use kl::{kl_value, KlTerm, POSITIVITY_FLOOR};
pub use operators::{BlurOperator, GradOperator};
pub use toys::{quadratic_toy, smooth_toy, strongly_convex_toy, Toy};
