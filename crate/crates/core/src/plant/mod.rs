//! Plant, barrier and Lyapunov descriptions, and the worst-case barrier
//! derivative `H(x, u_v) = inf_{u_s ∈ U_s} L_F B(x, (u_v, u_s))`.

mod barrier;
mod boxset;
mod system;

pub use barrier::{Barrier, QuadraticLyapunov, SphereBarrier};
pub use boxset::BoxSet;
pub use system::{ControlAffineSystem, PolyTerm};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::geometry::sample_sphere;
use crate::{Error, Result};

/// Safety factor applied to sampled gradient norms.
pub const LIPSCHITZ_SAFETY: f64 = 1.2;
/// Smallest Lipschitz estimate ever returned.
pub const LIPSCHITZ_FLOOR: f64 = 1e-12;

/// `(L_f h, L_{g_v} h, L_{g_s} h)` for a scalar field `h` with gradient `∇h(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LieDerivatives {
    pub l_f: f64,
    pub l_gv: DVector<f64>,
    pub l_gs: DVector<f64>,
}

pub fn lie_derivatives_of(
    sys: &ControlAffineSystem,
    grad: &DVector<f64>,
    x: &DVector<f64>,
) -> Result<LieDerivatives> {
    if x.len() != sys.n() || grad.len() != sys.n() {
        return Err(Error::Dimension(format!("state has {} coordinates, system has {}", x.len(), sys.n())));
    }
    let l_f = grad.dot(&sys.drift(x));
    let l_gv = sys.g_v_at(x).tr_mul(grad);
    let l_gs = sys.g_s_at(x).tr_mul(grad);
    if !l_f.is_finite() || l_gv.iter().chain(l_gs.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { x: x.iter().copied().collect(), what: "Lie derivative".into() });
    }
    Ok(LieDerivatives { l_f, l_gv, l_gs })
}

pub fn lie_derivatives(sys: &ControlAffineSystem, bar: &dyn Barrier, x: &DVector<f64>) -> Result<LieDerivatives> {
    lie_derivatives_of(sys, &bar.gradient(x), x)
}

/// `H` at a point, split into its `u_v`-independent part
/// `ψ(x) = L_f B + min_{U_s} L_{g_s}B·u_s` and the vulnerable row `b(x) = L_{g_v} B`.
#[derive(Debug, Clone)]
pub struct HSplit {
    pub psi: f64,
    pub b: DVector<f64>,
}

impl HSplit {
    pub fn at(sys: &ControlAffineSystem, bar: &dyn Barrier, x: &DVector<f64>) -> Result<HSplit> {
        if sys.u_s.is_empty() {
            return Err(Error::EmptyBox("U_s"));
        }
        let lie = lie_derivatives(sys, bar, x)?;
        Ok(HSplit { psi: lie.l_f + sys.u_s.min_linear(lie.l_gs.as_slice()), b: lie.l_gv })
    }

    pub fn sup(&self, uv_tilde: &BoxSet) -> f64 {
        self.psi + uv_tilde.max_linear(self.b.as_slice())
    }
}

/// `H(x, u_v)`, minimizing the linear functional over the `U_s` box exactly.
pub fn inf_h(sys: &ControlAffineSystem, bar: &dyn Barrier, x: &DVector<f64>, u_v: &[f64]) -> Result<f64> {
    if u_v.len() != sys.m_v() {
        return Err(Error::Dimension(format!("u_v has {} entries, m_v = {}", u_v.len(), sys.m_v())));
    }
    let split = HSplit::at(sys, bar, x)?;
    Ok(split.psi + split.b.iter().zip(u_v).map(|(b, u)| b * u).sum::<f64>())
}

/// `sup_{u_v ∈ Ũ_v} H(x, u_v)`.
pub fn sup_h(sys: &ControlAffineSystem, bar: &dyn Barrier, x: &DVector<f64>, uv_tilde: &BoxSet) -> Result<f64> {
    if uv_tilde.is_empty() {
        return Err(Error::EmptyBox("Ũ_v"));
    }
    if uv_tilde.dim() != sys.m_v() {
        return Err(Error::Dimension(format!("Ũ_v has dimension {}, m_v = {}", uv_tilde.dim(), sys.m_v())));
    }
    Ok(HSplit::at(sys, bar, x)?.sup(uv_tilde))
}

fn central_gradient<F>(phi: F, x: &DVector<f64>, step: f64) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Result<f64>,
{
    let mut g = DVector::zeros(x.len());
    let mut probe = x.clone();
    for k in 0..x.len() {
        probe[k] = x[k] + step;
        let up = phi(&probe)?;
        probe[k] = x[k] - step;
        let down = phi(&probe)?;
        probe[k] = x[k];
        g[k] = (up - down) / (2.0 * step);
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { x: x.iter().copied().collect(), what: "finite-difference gradient".into() });
    }
    Ok(g)
}

fn boundary_samples(bar: &dyn Barrier, c: f64, density: usize, seed: u64) -> Result<(Vec<DVector<f64>>, f64)> {
    let r_c = bar
        .boundary_radius(c)
        .ok_or_else(|| Error::InvalidArgument(format!("∂S_c is empty for c = {c}")))?;
    let n = bar.dimension();
    let mesh = sample_sphere(n, density.max(n + 1), bar.center(), r_c, seed)?;
    Ok((mesh.points, r_c))
}

/// Sampled Lipschitz estimate of `x ↦ sup_{Ũ_v} H(x, ·)` on `∂S_c`:
/// `1.2 ×` the largest central-difference gradient norm (step `1e-5·r_c`).
pub fn estimate_l_h(
    sys: &ControlAffineSystem,
    bar: &dyn Barrier,
    uv_tilde: &BoxSet,
    c: f64,
    density: usize,
    seed: u64,
) -> Result<f64> {
    if uv_tilde.is_empty() {
        return Err(Error::EmptyBox("Ũ_v"));
    }
    let (points, r_c) = boundary_samples(bar, c, density, seed)?;
    let step = 1e-5 * r_c;
    let mut worst = 0.0f64;
    for x in &points {
        let g = central_gradient(|y| sup_h(sys, bar, y, uv_tilde), x, step)?;
        worst = worst.max(g.norm());
    }
    Ok((LIPSCHITZ_SAFETY * worst).max(LIPSCHITZ_FLOOR))
}

/// Lipschitz estimate valid for every sub-box of `U_v` at once:
/// `1.2 × max_x (|∇ψ(x)| + Σ_k M_k |∇b_k(x)|)` with `M_k` the largest bound
/// magnitude of channel `k`.
pub fn estimate_l_h_uniform(
    sys: &ControlAffineSystem,
    bar: &dyn Barrier,
    c: f64,
    density: usize,
    seed: u64,
) -> Result<f64> {
    let (points, r_c) = boundary_samples(bar, c, density, seed)?;
    let step = 1e-5 * r_c;
    let magnitudes = sys.u_v.magnitudes();
    let mut worst = 0.0f64;
    for x in &points {
        let mut total = central_gradient(|y| Ok(HSplit::at(sys, bar, y)?.psi), x, step)?.norm();
        for (k, &mag) in magnitudes.iter().enumerate() {
            if mag > 0.0 {
                total += mag * central_gradient(|y| Ok(HSplit::at(sys, bar, y)?.b[k]), x, step)?.norm();
            }
        }
        worst = worst.max(total);
    }
    Ok((LIPSCHITZ_SAFETY * worst).max(LIPSCHITZ_FLOOR))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CMaxMethod {
    Exact,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CMax {
    pub value: f64,
    pub method: CMaxMethod,
}

/// `c_M = -min_S B`: exact for barriers that know it, otherwise the best of
/// `sample_count` uniform samples of the ball refined by projected gradient descent.
pub fn compute_c_m(bar: &dyn Barrier, sample_count: usize, seed: u64) -> CMax {
    if let Some(value) = bar.exact_c_max() {
        return CMax { value, method: CMaxMethod::Exact };
    }
    CMax { value: -sampled_min(bar, sample_count.max(1), seed), method: CMaxMethod::Sampled }
}

fn sampled_min(bar: &dyn Barrier, sample_count: usize, seed: u64) -> f64 {
    let n = bar.dimension();
    let center = bar.center();
    let radius = bar.radius();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let in_ball = |x: &DVector<f64>| {
        let off = x - center;
        let d = off.norm();
        if d > radius {
            center + off * (radius / d)
        } else {
            x.clone()
        }
    };
    let mut best = center.clone();
    let mut best_val = bar.value(&best);
    for _ in 0..sample_count {
        let dir = DVector::from_fn(n, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
        let norm = dir.norm();
        if norm == 0.0 {
            continue;
        }
        let u: f64 = rand::RngExt::random(&mut rng);
        let x = center + dir * (radius * u.powf(1.0 / n as f64) / norm);
        let v = bar.value(&x);
        if v < best_val {
            best_val = v;
            best = x;
        }
    }
    let mut step = 0.1 * radius;
    for _ in 0..500 {
        let g = bar.gradient(&best);
        if g.norm() < 1e-14 || step < 1e-14 * radius {
            break;
        }
        let trial = in_ball(&(&best - &g * (step / g.norm())));
        let v = bar.value(&trial);
        if v < best_val {
            best = trial;
            best_val = v;
            step *= 1.5;
        } else {
            step *= 0.5;
        }
    }
    best_val
}
