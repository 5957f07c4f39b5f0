use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::linalg::LinearOperator;
use crate::solver::SmoothFunction;

/// Arguments below this value are floored by the relaxed gradient.
pub const POSITIVITY_FLOOR: f64 = 1e-12;

/// `sum_i z_i - b_i log z_i`; pixels with `b_i = 0` contribute `z_i`.
pub fn kl_value(b: &DVector<f64>, z: &DVector<f64>) -> Result<f64> {
    check_dim(b.len(), z.len())?;
    let mut total = 0.0;
    for (i, (&bi, &zi)) in b.iter().zip(z.iter()).enumerate() {
        if bi > 0.0 {
            if !(zi > 0.0) {
                return Err(Error::Domain(format!("blurred value {zi} at pixel {i} with count {bi}")));
            }
            total += zi - bi * zi.ln();
        } else {
            total += zi;
        }
    }
    Ok(total)
}

/// `u - log(1 + u)` without cancellation for small `u`.
fn excess(u: f64) -> f64 {
    if u.abs() < 1e-3 {
        let u2 = u * u;
        u2 * (0.5 - u / 3.0 + u2 / 4.0 - u2 * u / 5.0)
    } else {
        u - u.ln_1p()
    }
}

/// `h(x) = KL(b, A x)` for a linear `A`.
#[derive(Clone)]
pub struct KlTerm {
    a: Arc<dyn LinearOperator>,
    b: DVector<f64>,
}

impl std::fmt::Debug for KlTerm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KlTerm").field("dim", &self.b.len()).finish()
    }
}

impl KlTerm {
    pub fn new(a: Arc<dyn LinearOperator>, b: DVector<f64>) -> Result<Self> {
        check_dim(a.dim_out(), b.len())?;
        if b.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidArgument("observation counts must be nonnegative".into()));
        }
        Ok(KlTerm { a, b })
    }

    pub fn observation(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn operator(&self) -> &dyn LinearOperator {
        self.a.as_ref()
    }

    /// `max_i b_i / (A x)_i^2`, the largest diagonal curvature of the data term
    /// at `x`; with `|A| <= 1` it bounds the Hessian norm there.
    pub fn local_curvature(&self, x: &DVector<f64>) -> f64 {
        let z = self.a.apply(x);
        self.b
            .iter()
            .zip(z.iter())
            .filter(|(b, _)| **b > 0.0)
            .map(|(b, z)| b / (z * z))
            .fold(0.0, f64::max)
    }

    fn gradient_from(&self, z: &DVector<f64>) -> DVector<f64> {
        let r = DVector::from_iterator(
            z.len(),
            self.b.iter().zip(z.iter()).map(|(&b, &z)| if b > 0.0 { 1.0 - b / z } else { 1.0 }),
        );
        self.a.adjoint(&r)
    }
}

impl SmoothFunction for KlTerm {
    fn dim(&self) -> usize {
        self.a.dim_in()
    }

    fn value(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        kl_value(&self.b, &self.a.apply(x))
    }

    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), x.len())?;
        let z = self.a.apply(x);
        if let Some(i) = (0..z.len()).find(|&i| self.b[i] > 0.0 && !(z[i] > 0.0)) {
            return Err(Error::Domain(format!("blurred value {} at pixel {i}", z[i])));
        }
        Ok(self.gradient_from(&z))
    }

    /// `sum_i b_i (u_i - log(1 + u_i))`, `u = (z_new - z) / z`.
    fn bregman(&self, x_new: &DVector<f64>, x: &DVector<f64>, _grad_x: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        check_dim(self.dim(), x_new.len())?;
        let z = self.a.apply(x);
        let z_new = self.a.apply(x_new);
        let mut total = 0.0;
        for i in 0..z.len() {
            let b = self.b[i];
            if b == 0.0 {
                continue;
            }
            if !(z[i] > 0.0) || !(z_new[i] > 0.0) {
                return Err(Error::Domain(format!("blurred value at pixel {i} left the domain")));
            }
            total += b * excess((z_new[i] - z[i]) / z[i]);
        }
        Ok(total)
    }

    fn gradient_relaxed(&self, x: &DVector<f64>) -> (DVector<f64>, usize) {
        let mut z = self.a.apply(x);
        let mut hits = 0;
        for (zi, &bi) in z.iter_mut().zip(self.b.iter()) {
            if bi > 0.0 && !(*zi >= POSITIVITY_FLOOR) {
                *zi = POSITIVITY_FLOOR;
                hits += 1;
            }
        }
        (self.gradient_from(&z), hits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::IdentityOperator;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn scalar_values() {
        assert_eq!(kl_value(&v(&[1.0]), &v(&[1.0])).unwrap(), 1.0);
        assert_eq!(kl_value(&v(&[0.0]), &v(&[3.0])).unwrap(), 3.0);
        assert!(matches!(kl_value(&v(&[1.0]), &v(&[0.0])), Err(Error::Domain(_))));
    }

    #[test]
    fn scalar_gradients() {
        let h = KlTerm::new(Arc::new(IdentityOperator(1)), v(&[1.0])).unwrap();
        assert_eq!(h.gradient(&v(&[1.0])).unwrap(), v(&[0.0]));
        let h = KlTerm::new(Arc::new(IdentityOperator(1)), v(&[2.0])).unwrap();
        assert_eq!(h.gradient(&v(&[1.0])).unwrap(), v(&[-1.0]));
    }

    #[test]
    fn stable_bregman_matches_naive_for_large_steps() {
        let h = KlTerm::new(Arc::new(IdentityOperator(3)), v(&[1.0, 4.0, 0.0])).unwrap();
        let x = v(&[0.5, 2.0, 1.0]);
        let xn = v(&[1.5, 1.0, 2.0]);
        let g = h.gradient(&x).unwrap();
        let naive = h.value(&xn).unwrap() - h.value(&x).unwrap() - g.dot(&(&xn - &x));
        assert!((h.bregman(&xn, &x, &g).unwrap() - naive).abs() < 1e-13);
    }

    #[test]
    fn series_branch_is_continuous() {
        for u in [-9.99e-4, -1.001e-3, 9.99e-4, 1.001e-3] {
            let exact = u - f64::ln_1p(u);
            assert!((excess(u) - exact).abs() <= 1e-9 * exact);
        }
        assert!(excess(1e-9) > 0.0);
    }

    #[test]
    fn relaxed_gradient_counts_floors() {
        let h = KlTerm::new(Arc::new(IdentityOperator(2)), v(&[1.0, 1.0])).unwrap();
        let (g, hits) = h.gradient_relaxed(&v(&[0.0, 1.0]));
        assert_eq!(hits, 1);
        assert!(g[0] < -1e11);
    }
}
