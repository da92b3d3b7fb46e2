//! The CBF/CLF quadratic program that defines the secure feedback law.
//!
//! The decision vector is `z = (v_s, v_v, η, ζ)`. The QP is
//!
//! ```text
//! min ½|z|² + q ζ
//! s.t. v_s ∈ U_s,  v_v ∈ Ũ_v,  η ≥ 0,
//!      L_{g_s}B v_s + (B + c) η ≤ -L_f B - sup_{Ũ_v} L_{g_v}B u_v - l_B δ,
//!      L_{g_s}V v_s + L_{g_v}V v_v + V ζ ≤ -L_f V - l_V δ.
//! ```
//!
//! The secure input applied to the plant is `v_s*`.

mod solver;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::plant::{lie_derivatives, lie_derivatives_of, Barrier, BoxSet, ControlAffineSystem, QuadraticLyapunov};
use crate::{Error, Result};

/// States with `0 < B(x) + c ≤ BOUNDARY_SNAP` are treated as boundary states.
pub const BOUNDARY_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowLabel {
    InputS,
    InputV,
    EtaSign,
    Cbf,
    Clf,
}

/// One constraint `a·z ≤ b`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QpRow {
    pub a: Vec<f64>,
    pub b: f64,
    pub label: RowLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QpSpec {
    pub m_s: usize,
    pub m_v: usize,
    pub q: f64,
    pub rows: Vec<QpRow>,
}

impl QpSpec {
    pub fn dim(&self) -> usize {
        self.m_s + self.m_v + 2
    }

    pub fn eta_index(&self) -> usize {
        self.m_s + self.m_v
    }

    pub fn zeta_index(&self) -> usize {
        self.m_s + self.m_v + 1
    }

    fn linear_term(&self) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim());
        g[self.zeta_index()] = self.q;
        g
    }

    fn validate(&self) -> Result<()> {
        if !(self.q > 0.0) || !self.q.is_finite() {
            return Err(Error::InvalidArgument(format!("q must be positive, got {}", self.q)));
        }
        for (i, r) in self.rows.iter().enumerate() {
            if r.a.len() != self.dim() {
                return Err(Error::Dimension(format!("row {i} has {} entries, expected {}", r.a.len(), self.dim())));
            }
            if !r.b.is_finite() || r.a.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("row {i} ({:?}) is not finite", r.label)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum QpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QpSolution {
    pub z: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub objective: f64,
    /// Largest of the stationarity norm, constraint violation and complementarity products.
    pub kkt_residual: f64,
    pub status: QpStatus,
}

pub fn solve_qp(spec: &QpSpec) -> Result<QpSolution> {
    spec.validate()?;
    let dim = spec.dim();
    let a = DMatrix::from_fn(spec.rows.len(), dim, |r, c| spec.rows[r].a[c]);
    let b = DVector::from_iterator(spec.rows.len(), spec.rows.iter().map(|r| r.b));
    let g = spec.linear_term();
    let raw = solver::solve(&a, &b, &g);

    let mut stationarity = &raw.z + &g;
    let mut violation = 0.0f64;
    let mut complementarity = 0.0f64;
    for (i, &lam) in raw.lambda.iter().enumerate() {
        let ai = a.row(i).transpose();
        let slack = b[i] - ai.dot(&raw.z);
        violation = violation.max(-slack);
        complementarity = complementarity.max((lam * slack).abs());
        stationarity += ai * lam;
    }
    let kkt_residual = stationarity.norm().max(violation).max(complementarity);
    let objective = 0.5 * raw.z.norm_squared() + g.dot(&raw.z);
    Ok(QpSolution {
        z: raw.z.iter().copied().collect(),
        multipliers: raw.lambda,
        objective,
        kkt_residual,
        status: match raw.outcome {
            solver::Outcome::Optimal => QpStatus::Optimal,
            solver::Outcome::Infeasible => QpStatus::Infeasible,
        },
    })
}

/// Everything the feedback law needs besides the state.
#[derive(Clone, Copy)]
pub struct ControlContext<'a> {
    pub sys: &'a ControlAffineSystem,
    pub bar: &'a dyn Barrier,
    pub lyap: &'a QuadraticLyapunov,
    pub c: f64,
    pub uv_tilde: &'a BoxSet,
    pub q: f64,
    pub l_b: f64,
    pub l_v: f64,
}

fn unit(dim: usize, i: usize, sign: f64) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[i] = sign;
    v
}

fn push_box(rows: &mut Vec<QpRow>, bx: &BoxSet, offset: usize, dim: usize, label: RowLabel) {
    for (j, (&lo, &hi)) in bx.lower.iter().zip(&bx.upper).enumerate() {
        if hi.is_finite() {
            rows.push(QpRow { a: unit(dim, offset + j, 1.0), b: hi, label });
        }
        if lo.is_finite() {
            rows.push(QpRow { a: unit(dim, offset + j, -1.0), b: -lo, label });
        }
    }
}

pub fn build_qp(x: &DVector<f64>, ctx: &ControlContext) -> Result<QpSpec> {
    let sys = ctx.sys;
    if ctx.uv_tilde.is_empty() {
        return Err(Error::EmptyBox("Ũ_v"));
    }
    if ctx.uv_tilde.dim() != sys.m_v() {
        return Err(Error::Dimension(format!("Ũ_v has {} components, m_v = {}", ctx.uv_tilde.dim(), sys.m_v())));
    }
    let (m_s, m_v) = (sys.m_s(), sys.m_v());
    let dim = m_s + m_v + 2;
    let (eta, zeta) = (m_s + m_v, m_s + m_v + 1);
    let mut rows = Vec::with_capacity(2 * (m_s + m_v) + 3);
    push_box(&mut rows, &sys.u_s, 0, dim, RowLabel::InputS);
    push_box(&mut rows, ctx.uv_tilde, m_s, dim, RowLabel::InputV);
    rows.push(QpRow { a: unit(dim, eta, -1.0), b: 0.0, label: RowLabel::EtaSign });

    let lb = lie_derivatives(sys, ctx.bar, x)?;
    let mut b_plus_c = ctx.bar.value(x) + ctx.c;
    if b_plus_c > 0.0 && b_plus_c <= BOUNDARY_SNAP {
        b_plus_c = 0.0;
    }
    let sup_term = ctx.uv_tilde.max_linear(lb.l_gv.as_slice());
    let mut cbf = vec![0.0; dim];
    cbf[..m_s].copy_from_slice(lb.l_gs.as_slice());
    cbf[eta] = b_plus_c;
    rows.push(QpRow { a: cbf, b: -lb.l_f - sup_term - ctx.l_b * sys.delta, label: RowLabel::Cbf });

    let lv = lie_derivatives_of(sys, &ctx.lyap.gradient(x), x)?;
    let mut clf = vec![0.0; dim];
    clf[..m_s].copy_from_slice(lv.l_gs.as_slice());
    clf[m_s..m_s + m_v].copy_from_slice(lv.l_gv.as_slice());
    clf[zeta] = ctx.lyap.value(x);
    rows.push(QpRow { a: clf, b: -lv.l_f - ctx.l_v * sys.delta, label: RowLabel::Clf });

    let spec = QpSpec { m_s, m_v, q: ctx.q, rows };
    spec.validate()?;
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Feedback {
    pub u_s: Vec<f64>,
    /// The QP's vulnerable input, applied before an attack starts.
    pub v_v: Vec<f64>,
    pub eta: f64,
    pub zeta: f64,
    pub kkt_residual: f64,
    /// `B(x) + c > 0`: the state has drifted outside `S_c`.
    pub outside: bool,
}

pub fn feedback(x: &DVector<f64>, ctx: &ControlContext) -> Result<Feedback> {
    let spec = build_qp(x, ctx)?;
    let sol = solve_qp(&spec)?;
    if sol.status == QpStatus::Infeasible {
        return Err(Error::QpInfeasible { x: x.iter().copied().collect() });
    }
    let (m_s, m_v) = (spec.m_s, spec.m_v);
    Ok(Feedback {
        u_s: sol.z[..m_s].to_vec(),
        v_v: sol.z[m_s..m_s + m_v].to_vec(),
        eta: sol.z[spec.eta_index()],
        zeta: sol.z[spec.zeta_index()],
        kkt_residual: sol.kkt_residual,
        outside: ctx.bar.value(x) + ctx.c > BOUNDARY_SNAP,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowComplementarity {
    pub label: RowLabel,
    pub multiplier: f64,
    pub slack: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplementarityReport {
    pub rows: Vec<RowComplementarity>,
    pub all_pass: bool,
}

/// A row passes when exactly one of `λ_i > tol` and `b_i - a_i·z > tol` holds.
pub fn check_strict_complementarity(spec: &QpSpec, sol: &QpSolution, tol: f64) -> ComplementarityReport {
    let rows: Vec<RowComplementarity> = spec
        .rows
        .iter()
        .zip(&sol.multipliers)
        .map(|(r, &lam)| {
            let slack = r.b - r.a.iter().zip(&sol.z).map(|(a, z)| a * z).sum::<f64>();
            RowComplementarity { label: r.label, multiplier: lam, slack, pass: (lam > tol) != (slack > tol) }
        })
        .collect();
    let all_pass = rows.iter().all(|r| r.pass);
    ComplementarityReport { rows, all_pass }
}
