use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// A barrier function `B` with safe set `S = {B ≤ 0}` whose sublevel sets
/// `S_c = {B ≤ -c}` are spheres about a common center.
pub trait Barrier: Send + Sync {
    fn dimension(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    /// Lipschitz constant of `B` on `S`.
    fn lipschitz(&self) -> f64;
    fn center(&self) -> &DVector<f64>;
    /// Radius of the zero level set.
    fn radius(&self) -> f64;
    /// Radius of `∂S_c`, or `None` when `S_c` has no interior.
    fn boundary_radius(&self, c: f64) -> Option<f64>;
    /// `-min_S B` when known in closed form.
    fn exact_c_max(&self) -> Option<f64> {
        None
    }
}

/// `B(x) = |x - x_o|² - R²`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereBarrier {
    center: DVector<f64>,
    radius: f64,
}

impl SphereBarrier {
    pub fn new(center: DVector<f64>, radius: f64) -> crate::Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(crate::Error::InvalidArgument(format!("barrier radius must be positive, got {radius}")));
        }
        if center.is_empty() || center.iter().any(|v| !v.is_finite()) {
            return Err(crate::Error::InvalidArgument("barrier center must be finite and non-empty".into()));
        }
        Ok(SphereBarrier { center, radius })
    }
}

impl Barrier for SphereBarrier {
    fn dimension(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        (x - &self.center).norm_squared() - self.radius * self.radius
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (x - &self.center) * 2.0
    }

    fn lipschitz(&self) -> f64 {
        2.0 * self.radius
    }

    fn center(&self) -> &DVector<f64> {
        &self.center
    }

    fn radius(&self) -> f64 {
        self.radius
    }

    fn boundary_radius(&self, c: f64) -> Option<f64> {
        let r2 = self.radius * self.radius - c;
        (c >= 0.0 && r2 > 0.0).then(|| r2.sqrt())
    }

    fn exact_c_max(&self) -> Option<f64> {
        Some(self.radius * self.radius)
    }
}

/// Quadratic Lyapunov candidate `V(x) = xᵀ P x`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticLyapunov {
    pub p: DMatrix<f64>,
}

impl QuadraticLyapunov {
    pub fn new(p: DMatrix<f64>) -> crate::Result<Self> {
        if p.nrows() != p.ncols() || p.is_empty() {
            return Err(crate::Error::Dimension(format!("P must be square, got {}x{}", p.nrows(), p.ncols())));
        }
        let sym = (&p + p.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
            return Err(crate::Error::InvalidArgument("P must be positive definite".into()));
        }
        Ok(QuadraticLyapunov { p })
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.p * x))
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (&self.p + self.p.transpose()) * x
    }

    /// `max_S |∇V| = 2 λ_max(P_sym) · max_S |x|`, with `S` the barrier's ball.
    pub fn lipschitz_on(&self, bar: &dyn Barrier) -> f64 {
        let sym = (&self.p + self.p.transpose()) * 0.5;
        let lambda = SymmetricEigen::new(sym).eigenvalues.iter().fold(0.0f64, |a, &l| a.max(l.abs()));
        2.0 * lambda * (bar.center().norm() + bar.radius())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_barrier_geometry() {
        let b = SphereBarrier::new(DVector::from_vec(vec![1.0, 0.0, 0.0]), 2.0).unwrap();
        assert!(b.value(b.center()) < 0.0);
        assert_eq!(b.boundary_radius(0.0), Some(2.0));
        assert_eq!(b.boundary_radius(3.0), Some(1.0));
        assert_eq!(b.boundary_radius(4.0), None);
        assert_eq!(b.exact_c_max(), Some(4.0));
        assert_eq!(b.lipschitz(), 4.0);
        let on = DVector::from_vec(vec![1.0, 2.0, 0.0]);
        assert!(b.value(&on).abs() < 1e-12);
    }

    #[test]
    fn gradient_bounded_by_lipschitz_on_samples() {
        let b = SphereBarrier::new(DVector::from_vec(vec![0.3, -0.2]), 1.5).unwrap();
        for k in 0..50 {
            let t = k as f64 * 0.37;
            let r = 1.5 * (k as f64 / 49.0);
            let x = b.center() + DVector::from_vec(vec![r * t.cos(), r * t.sin()]);
            assert!(b.gradient(&x).norm() <= b.lipschitz() + 1e-12);
        }
    }

    #[test]
    fn lyapunov_is_positive_definite() {
        let v = QuadraticLyapunov::new(DMatrix::identity(3, 3)).unwrap();
        assert_eq!(v.value(&DVector::zeros(3)), 0.0);
        assert!(v.value(&DVector::from_vec(vec![0.1, 0.0, -0.2])) > 0.0);
        let bar = SphereBarrier::new(DVector::zeros(3), 1.0).unwrap();
        assert_eq!(v.lipschitz_on(&bar), 2.0);
        assert!(QuadraticLyapunov::new(DMatrix::from_diagonal_element(2, 2, -1.0)).is_err());
    }
}
