//! Finite-point viability certificate and the iterative search for a
//! sublevel set `S_c` and a tolerable vulnerable-input box `Ũ_v`.
//!
//! A mesh point passes when
//!
//! ```text
//! sup_{u_v ∈ Ũ_v} H(x_i, u_v) + l_H d_a + l_B δ ≤ 0.
//! ```
//!
//! If every vertex of a covering mesh passes, the Lipschitz slack `l_H d_a`
//! extends the inequality `sup H ≤ -l_B δ` to the whole boundary `∂S_c`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::geometry::{sample_sphere, triangulate, SamplingMesh};
use crate::plant::{
    compute_c_m, estimate_l_h, estimate_l_h_uniform, Barrier, BoxSet, ControlAffineSystem, HSplit,
};
use crate::{Error, Result};

/// Slack allowed by [`dense_verify`] on the unsampled condition.
pub const DENSE_TOLERANCE: f64 = 1e-6;

/// Samples used for `c_M` when the barrier has no closed form.
const C_MAX_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    pub margins: Vec<f64>,
    pub violating_indices: Vec<usize>,
    pub worst_margin: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CertificateReport {
    fn from_margins(margins: Vec<f64>, tolerance: f64) -> Self {
        let violating_indices: Vec<usize> =
            margins.iter().enumerate().filter(|(_, &m)| !(m <= tolerance)).map(|(i, _)| i).collect();
        let worst_margin = margins.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let pass = violating_indices.is_empty();
        CertificateReport { margins, violating_indices, worst_margin, tolerance, pass }
    }
}

/// Checks the finite-point condition at every vertex of a triangulated mesh of `∂S_c`.
pub fn certify(
    mesh: &SamplingMesh,
    sys: &ControlAffineSystem,
    bar: &dyn Barrier,
    uv_tilde: &BoxSet,
    l_h: f64,
    l_b: f64,
) -> Result<CertificateReport> {
    let d_a = match mesh.d_a {
        Some(d) if !mesh.faces.is_empty() => d,
        _ => return Err(Error::NotTriangulated),
    };
    if uv_tilde.is_empty() {
        return Err(Error::EmptyBox("Ũ_v"));
    }
    if !(l_h >= 0.0) {
        return Err(Error::InvalidArgument(format!("l_H must be >= 0, got {l_h}")));
    }
    let splits = mesh
        .points
        .iter()
        .map(|x| HSplit::at(sys, bar, x))
        .collect::<Result<Vec<_>>>()?;
    let slack = l_h * d_a + l_b * sys.delta;
    Ok(certify_splits(&splits, uv_tilde, slack))
}

fn certify_splits(splits: &[HSplit], uv_tilde: &BoxSet, slack: f64) -> CertificateReport {
    let margins = splits.iter().map(|s| s.sup(uv_tilde) + slack).collect();
    CertificateReport::from_margins(margins, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Certified,
    Infeasible,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Iterations {
    pub erosions: u64,
    pub c_steps: u64,
    pub doublings: u64,
}

/// Outcome of the search. For `Infeasible` results the fields describe the
/// candidate with the least worst margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViabilityResult {
    pub c: f64,
    #[serde(rename = "Uv_tilde")]
    pub uv_tilde: BoxSet,
    #[serde(rename = "N_p")]
    pub n_p: usize,
    pub d_a: f64,
    pub worst_margin: f64,
    #[serde(rename = "l_H_used")]
    pub l_h_used: f64,
    #[serde(rename = "l_B_used")]
    pub l_b_used: f64,
    pub delta: f64,
    pub iterations: Iterations,
    pub status: Status,
    pub seed: u64,
    pub tool_version: String,
}

impl ViabilityResult {
    pub fn is_certified(&self) -> bool {
        self.status == Status::Certified
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LhMode {
    /// One estimate that holds for every sub-box of `U_v`.
    #[default]
    Fixed,
    /// Re-estimate for each candidate `(c, Ũ_v)`.
    Recompute,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchParams {
    pub eps1: f64,
    pub eps2: f64,
    pub n_c0: usize,
    pub n_max: usize,
    pub seed: u64,
    pub lh_mode: LhMode,
    /// Boundary samples per Lipschitz estimate.
    pub lh_density: usize,
}

/// User-pinned constants; `None` means "derive".
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ConstantOverrides {
    pub l_b: Option<f64>,
    pub l_h: Option<f64>,
}

impl SearchParams {
    fn validate(&self, n: usize) -> Result<()> {
        if !(self.eps1 > 0.0) || !(self.eps2 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "eps1 and eps2 must be positive, got {} and {}",
                self.eps1, self.eps2
            )));
        }
        if self.n_c0 < n + 1 {
            return Err(Error::InvalidArgument(format!("Nc0 = {} must be at least n + 1 = {}", self.n_c0, n + 1)));
        }
        if self.n_max <= self.n_c0 {
            return Err(Error::InvalidArgument(format!(
                "Nmax = {} must exceed Nc0 = {}",
                self.n_max, self.n_c0
            )));
        }
        if self.lh_density == 0 {
            return Err(Error::InvalidArgument("lh_density must be positive".into()));
        }
        Ok(())
    }
}

fn check_dimensions(sys: &ControlAffineSystem, bar: &dyn Barrier) -> Result<usize> {
    let n = sys.n();
    if bar.dimension() != n {
        return Err(Error::Dimension(format!("barrier lives in R^{}, system in R^{n}", bar.dimension())));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("boundary sampling needs n >= 2".into()));
    }
    Ok(n)
}

/// Number of erosions after which `U_v ⊖ k·ε₁` is empty (or nothing is left to erode).
fn erosion_limit(u_v: &BoxSet, eps1: f64) -> u64 {
    if u_v.dim() == 0 {
        return 0;
    }
    (u_v.max_half_width() / eps1).floor() as u64 + 1
}

/// Iterative search over `N_p` (doubling), `c` (steps of `ε₂`) and `Ũ_v`
/// (erosion by `ε₁`), returning the first candidate that certifies.
pub fn algorithm1(
    sys: &ControlAffineSystem,
    bar: &dyn Barrier,
    params: &SearchParams,
    overrides: &ConstantOverrides,
) -> Result<ViabilityResult> {
    let n = check_dimensions(sys, bar)?;
    params.validate(n)?;
    if sys.u_v.is_empty() {
        return Err(Error::EmptyBox("U_v"));
    }

    let c_max = compute_c_m(bar, C_MAX_SAMPLES, params.seed).value;
    let l_b = overrides.l_b.unwrap_or_else(|| bar.lipschitz());
    let fixed_l_h = match (overrides.l_h, params.lh_mode) {
        (Some(l), _) => Some(l),
        (None, LhMode::Fixed) => Some(estimate_l_h_uniform(sys, bar, 0.0, params.lh_density, params.seed)?),
        (None, LhMode::Recompute) => None,
    };
    let max_erosions = erosion_limit(&sys.u_v, params.eps1);

    let mut iterations = Iterations::default();
    let mut best: Option<ViabilityResult> = None;
    let mut n_p = params.n_c0;
    let origin = DVector::zeros(n);

    while n_p < params.n_max {
        let unit_mesh = triangulate(sample_sphere(n, n_p, &origin, 1.0, params.seed)?)?;
        let mut step: u64 = 0;
        loop {
            let c = step as f64 * params.eps2;
            if c > c_max + 1e-12 {
                break;
            }
            let Some(r_c) = bar.boundary_radius(c) else { break };
            let mesh = unit_mesh.rescaled(bar.center(), r_c)?;
            let d_a = mesh.d_a.ok_or(Error::NotTriangulated)?;
            let splits = mesh
                .points
                .iter()
                .map(|x| HSplit::at(sys, bar, x))
                .collect::<Result<Vec<_>>>()?;

            let mut k: u64 = 0;
            loop {
                let uv_tilde = sys.u_v.erode(k as f64 * params.eps1);
                if uv_tilde.is_empty() {
                    break;
                }
                let l_h = match fixed_l_h {
                    Some(l) => l,
                    None => estimate_l_h(sys, bar, &uv_tilde, c, params.lh_density, params.seed)?,
                };
                let report = certify_splits(&splits, &uv_tilde, l_h * d_a + l_b * sys.delta);
                let candidate = ViabilityResult {
                    c,
                    uv_tilde,
                    n_p,
                    d_a,
                    worst_margin: report.worst_margin,
                    l_h_used: l_h,
                    l_b_used: l_b,
                    delta: sys.delta,
                    iterations,
                    status: if report.pass { Status::Certified } else { Status::Infeasible },
                    seed: params.seed,
                    tool_version: crate::VERSION.to_string(),
                };
                if report.pass {
                    return Ok(candidate);
                }
                if best.as_ref().is_none_or(|b| candidate.worst_margin < b.worst_margin) {
                    best = Some(candidate);
                }
                if k >= max_erosions {
                    break;
                }
                k += 1;
                iterations.erosions += 1;
            }
            step += 1;
            iterations.c_steps += 1;
        }
        n_p *= 2;
        iterations.doublings += 1;
    }

    let mut result = best.ok_or_else(|| Error::InvalidArgument("no candidate was evaluated".into()))?;
    result.iterations = iterations;
    result.status = Status::Infeasible;
    Ok(result)
}

/// Upper bound on the number of certificate evaluations [`algorithm1`] performs.
pub fn evaluation_bound(sys: &ControlAffineSystem, bar: &dyn Barrier, params: &SearchParams) -> u64 {
    let c_max = compute_c_m(bar, C_MAX_SAMPLES, params.seed).value;
    let doublings = ((params.n_max as f64 / params.n_c0 as f64).log2().floor() as u64) + 1;
    let c_values = (c_max / params.eps2).ceil() as u64 + 1;
    let widths = sys
        .u_v
        .lower
        .iter()
        .zip(&sys.u_v.upper)
        .map(|(l, u)| u - l)
        .fold(0.0, f64::max);
    let erosions = (widths / (2.0 * params.eps1)).ceil() as u64 + 1;
    doublings * c_values * erosions
}

/// Checks the unsampled condition `sup_{Ũ_v} H(x, ·) ≤ -l_B δ` on
/// `oversample × N_p` fresh boundary points of a certified result.
pub fn dense_verify(
    result: &ViabilityResult,
    sys: &ControlAffineSystem,
    bar: &dyn Barrier,
    oversample: usize,
    seed: u64,
) -> Result<CertificateReport> {
    if !result.is_certified() {
        return Err(Error::NotCertified);
    }
    if oversample == 0 {
        return Err(Error::InvalidArgument("oversample must be >= 1".into()));
    }
    let n = check_dimensions(sys, bar)?;
    let r_c = bar
        .boundary_radius(result.c)
        .ok_or_else(|| Error::InvalidArgument(format!("∂S_c is empty for c = {}", result.c)))?;
    let mesh = sample_sphere(n, oversample * result.n_p, bar.center(), r_c, seed)?;
    let offset = result.l_b_used * sys.delta;
    let margins = mesh
        .points
        .iter()
        .map(|x| Ok(HSplit::at(sys, bar, x)?.sup(&result.uv_tilde) + offset))
        .collect::<Result<Vec<_>>>()?;
    Ok(CertificateReport::from_margins(margins, DENSE_TOLERANCE))
}

#[derive(Debug, Clone)]
pub struct SubsetOutcome {
    /// Zero-based indices into [`ControlAffineSystem::all_inputs`].
    pub vulnerable: Vec<usize>,
    pub result: ViabilityResult,
}

#[derive(Debug, Clone)]
pub struct SubsetReport {
    pub outcomes: Vec<SubsetOutcome>,
    /// Largest certified `c` over all subsets, if any subset certified.
    pub aggregate_c: Option<f64>,
}

pub const DEFAULT_SUBSET_CAP: usize = 10;

/// Runs [`algorithm1`] once per non-empty set of vulnerable inputs.
pub fn worst_case_over_vulnerable_subsets(
    sys: &ControlAffineSystem,
    bar: &dyn Barrier,
    params: &SearchParams,
    overrides: &ConstantOverrides,
    max_inputs: usize,
) -> Result<SubsetReport> {
    let m = sys.m_v() + sys.m_s();
    if m > max_inputs {
        return Err(Error::SubsetCap((1usize << m.min(63)) - 1, (1usize << max_inputs.min(63)) - 1));
    }
    let mut outcomes = Vec::new();
    for mask in 1u64..(1u64 << m) {
        let vulnerable: Vec<usize> = (0..m).filter(|i| mask >> i & 1 == 1).collect();
        let split = sys.with_vulnerable(&vulnerable)?;
        let result = algorithm1(&split, bar, params, overrides)?;
        outcomes.push(SubsetOutcome { vulnerable, result });
    }
    let aggregate_c = outcomes
        .iter()
        .filter(|o| o.result.is_certified())
        .map(|o| o.result.c)
        .fold(None, |acc: Option<f64>, c| Some(acc.map_or(c, |a| a.max(c))));
    Ok(SubsetReport { outcomes, aggregate_c })
}
