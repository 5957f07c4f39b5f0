use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{power_norm_sq, LinearOperator};
use crate::prox::ProxFunction;

/// Smooth convex term `h` with Lipschitz gradient on its domain.
pub trait SmoothFunction: Send + Sync {
    fn dim(&self) -> usize;

    /// Errors with [`Error::Domain`] outside the domain.
    fn value(&self, x: &DVector<f64>) -> Result<f64>;

    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>>;

    /// `h(x_new) - h(x) - <grad h(x), x_new - x>`.
    fn bregman(&self, x_new: &DVector<f64>, x: &DVector<f64>, grad_x: &DVector<f64>) -> Result<f64> {
        Ok(self.value(x_new)? - self.value(x)? - grad_x.dot(&(x_new - x)))
    }

    /// Gradient that never fails; implementations may floor arguments into the
    /// domain and report how many entries were floored.
    fn gradient_relaxed(&self, x: &DVector<f64>) -> (DVector<f64>, usize) {
        match self.gradient(x) {
            Ok(g) => (g, 0),
            Err(_) => (DVector::from_element(x.len(), f64::NAN), x.len()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ZeroSmooth(pub usize);

impl SmoothFunction for ZeroSmooth {
    fn dim(&self) -> usize {
        self.0
    }
    fn value(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim(self.0, x.len())?;
        Ok(0.0)
    }
    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.0, x.len())?;
        Ok(DVector::zeros(self.0))
    }
    fn bregman(&self, _: &DVector<f64>, _: &DVector<f64>, _: &DVector<f64>) -> Result<f64> {
        Ok(0.0)
    }
}

/// `0.5 * weight * |x - center|^2`
#[derive(Debug, Clone)]
pub struct QuadraticSmooth {
    pub weight: f64,
    pub center: DVector<f64>,
}

impl SmoothFunction for QuadraticSmooth {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn value(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim(self.center.len(), x.len())?;
        Ok(0.5 * self.weight * (x - &self.center).norm_squared())
    }
    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.center.len(), x.len())?;
        Ok((x - &self.center) * self.weight)
    }
    fn bregman(&self, x_new: &DVector<f64>, x: &DVector<f64>, _: &DVector<f64>) -> Result<f64> {
        Ok(0.5 * self.weight * (x_new - x).norm_squared())
    }
}

pub type Objective = Box<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;

/// `min_x max_y <Kx, y> + g(x) + h(x) - f*(y)`.
pub struct SaddleProblem {
    pub k: Box<dyn LinearOperator>,
    pub h: Box<dyn SmoothFunction>,
    pub g: ProxFunction,
    pub fstar: ProxFunction,
    /// Bound on `|K|`.
    pub norm_k: Option<f64>,
    /// Lipschitz constant of `grad h` (on the relevant region).
    pub lipschitz_h: Option<f64>,
    /// Strong convexity modulus of `g`.
    pub gamma_strong: f64,
    /// Primal objective for trace reporting.
    pub objective: Option<Objective>,
}

impl std::fmt::Debug for SaddleProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SaddleProblem")
            .field("dim_x", &self.dim_x())
            .field("dim_y", &self.dim_y())
            .field("g", self.g.kind())
            .field("fstar", self.fstar.kind())
            .field("norm_k", &self.norm_k)
            .field("lipschitz_h", &self.lipschitz_h)
            .field("gamma_strong", &self.gamma_strong)
            .finish()
    }
}

impl SaddleProblem {
    pub fn new(
        k: Box<dyn LinearOperator>,
        h: Box<dyn SmoothFunction>,
        g: ProxFunction,
        fstar: ProxFunction,
    ) -> Result<Self> {
        check_dim(k.dim_in(), h.dim())?;
        check_dim(k.dim_in(), g.dim())?;
        check_dim(k.dim_out(), fstar.dim())?;
        Ok(SaddleProblem {
            k,
            h,
            g,
            fstar,
            norm_k: None,
            lipschitz_h: None,
            gamma_strong: 0.0,
            objective: None,
        })
    }

    pub fn with_norm_k(mut self, v: f64) -> Self {
        self.norm_k = Some(v);
        self
    }

    pub fn with_lipschitz_h(mut self, v: f64) -> Self {
        self.lipschitz_h = Some(v);
        self
    }

    pub fn with_gamma_strong(mut self, v: f64) -> Self {
        self.gamma_strong = v;
        self
    }

    pub fn with_objective(mut self, f: Objective) -> Self {
        self.objective = Some(f);
        self
    }

    pub fn dim_x(&self) -> usize {
        self.k.dim_in()
    }

    pub fn dim_y(&self) -> usize {
        self.k.dim_out()
    }

    /// `|K|`, from the stored bound or a power iteration.
    pub fn operator_norm(&self) -> f64 {
        self.norm_k
            .unwrap_or_else(|| power_norm_sq(self.k.as_ref(), 200, 0).sqrt())
    }

    pub fn primal_value(&self, x: &DVector<f64>) -> f64 {
        match &self.objective {
            Some(f) => f(x),
            None => f64::NAN,
        }
    }

    pub(crate) fn check_start(&self, x1: &DVector<f64>, y0: &DVector<f64>) -> Result<()> {
        check_dim(self.dim_x(), x1.len())?;
        check_dim(self.dim_y(), y0.len())?;
        if !self.g.value(x1)?.is_finite() {
            return Err(Error::InvalidArgument("x1 is not in the domain of g".into()));
        }
        self.h.value(x1)?;
        if y0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("y0 is not finite".into()));
        }
        Ok(())
    }
}
