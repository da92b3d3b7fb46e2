use nalgebra::{DMatrix, DVector};

use super::BoxSet;
use crate::{Error, Result};

/// One monomial `coeff · Π x_k^{exponents[k]}` added to state equation `equation`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyTerm {
    pub equation: usize,
    pub coeff: f64,
    pub exponents: Vec<u32>,
}

impl PolyTerm {
    fn eval(&self, x: &DVector<f64>) -> f64 {
        self.exponents
            .iter()
            .zip(x.iter())
            .fold(self.coeff, |acc, (&e, &xi)| acc * xi.powi(e as i32))
    }
}

/// `ẋ = f(x) + g_v u_v + g_s u_s + d` with `f(x) = A x + Σ poly` and constant
/// input matrices. Inputs are ordered `(u_v, u_s)`.
#[derive(Debug, Clone)]
pub struct ControlAffineSystem {
    pub a: DMatrix<f64>,
    pub poly: Vec<PolyTerm>,
    pub g_v: DMatrix<f64>,
    pub g_s: DMatrix<f64>,
    pub u_v: BoxSet,
    pub u_s: BoxSet,
    pub delta: f64,
}

impl ControlAffineSystem {
    pub fn new(
        a: DMatrix<f64>,
        poly: Vec<PolyTerm>,
        g_v: DMatrix<f64>,
        g_s: DMatrix<f64>,
        u_v: BoxSet,
        u_s: BoxSet,
        delta: f64,
    ) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::Dimension(format!("A must be square and non-empty, got {}x{}", n, a.ncols())));
        }
        if g_v.nrows() != n || g_s.nrows() != n {
            return Err(Error::Dimension(format!(
                "input matrices need {n} rows, got Bv {} and Bs {}",
                g_v.nrows(),
                g_s.nrows()
            )));
        }
        if u_v.dim() != g_v.ncols() || u_s.dim() != g_s.ncols() {
            return Err(Error::Dimension(format!(
                "input boxes ({}, {}) do not match input columns ({}, {})",
                u_v.dim(),
                u_s.dim(),
                g_v.ncols(),
                g_s.ncols()
            )));
        }
        for t in &poly {
            if t.equation >= n || t.exponents.len() != n {
                return Err(Error::Dimension(format!(
                    "polynomial term targets equation {} with {} exponents in a {n}-state system",
                    t.equation,
                    t.exponents.len()
                )));
            }
        }
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::InvalidArgument(format!("disturbance bound must be >= 0, got {delta}")));
        }
        let all_finite = a.iter().chain(g_v.iter()).chain(g_s.iter()).all(|v| v.is_finite())
            && poly.iter().all(|t| t.coeff.is_finite());
        if !all_finite {
            return Err(Error::InvalidArgument("system coefficients must be finite".into()));
        }
        Ok(ControlAffineSystem { a, poly, g_v, g_s, u_v, u_s, delta })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m_v(&self) -> usize {
        self.g_v.ncols()
    }

    pub fn m_s(&self) -> usize {
        self.g_s.ncols()
    }

    pub fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = &self.a * x;
        for t in &self.poly {
            out[t.equation] += t.eval(x);
        }
        out
    }

    pub fn g_v_at(&self, _x: &DVector<f64>) -> &DMatrix<f64> {
        &self.g_v
    }

    pub fn g_s_at(&self, _x: &DVector<f64>) -> &DMatrix<f64> {
        &self.g_s
    }

    pub fn vector_field(
        &self,
        x: &DVector<f64>,
        u_v: &DVector<f64>,
        u_s: &DVector<f64>,
        d: &DVector<f64>,
    ) -> DVector<f64> {
        self.drift(x) + self.g_v_at(x) * u_v + self.g_s_at(x) * u_s + d
    }

    /// All input columns in the order `(secure..., vulnerable...)` with their boxes.
    pub fn all_inputs(&self) -> (DMatrix<f64>, BoxSet) {
        let n = self.n();
        let m = self.m_s() + self.m_v();
        let mut g = DMatrix::zeros(n, m);
        g.columns_mut(0, self.m_s()).copy_from(&self.g_s);
        g.columns_mut(self.m_s(), self.m_v()).copy_from(&self.g_v);
        (g, self.u_s.product(&self.u_v))
    }

    /// Re-splits the inputs so that the given columns of [`Self::all_inputs`]
    /// are vulnerable and the rest secure.
    pub fn with_vulnerable(&self, vulnerable: &[usize]) -> Result<ControlAffineSystem> {
        let (g, bounds) = self.all_inputs();
        let m = g.ncols();
        if let Some(&bad) = vulnerable.iter().find(|&&i| i >= m) {
            return Err(Error::InvalidArgument(format!("input index {bad} out of range for m = {m}")));
        }
        let secure: Vec<usize> = (0..m).filter(|i| !vulnerable.contains(i)).collect();
        let pick = |idx: &[usize]| DMatrix::from_fn(self.n(), idx.len(), |r, c| g[(r, idx[c])]);
        ControlAffineSystem::new(
            self.a.clone(),
            self.poly.clone(),
            pick(vulnerable),
            pick(&secure),
            bounds.select(vulnerable),
            bounds.select(&secure),
            self.delta,
        )
    }
}
