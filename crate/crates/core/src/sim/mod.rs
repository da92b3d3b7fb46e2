//! Closed-loop simulation under the QP feedback with actuator attacks and
//! bounded disturbances.

mod signals;

pub use signals::{AttackKind, AttackSignal, DisturbanceKind, DisturbanceModel};

use std::time::Instant;

use nalgebra::DVector;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::plant::{Barrier, BoxSet};
use crate::qpcontrol::{feedback, ControlContext};
use crate::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_HORIZON: f64 = 10.0;
/// Default initial states are drawn from the ball of this fraction of `r_c`.
pub const X0_RADIUS_FRACTION: f64 = 0.9;

/// One classical Runge–Kutta step of `ẋ = f(t, x)`.
pub fn rk4_step<F>(f: &F, t: f64, x: &DVector<f64>, h: f64) -> DVector<f64>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let k1 = f(t, x);
    let k2 = f(t + 0.5 * h, &(x + &k1 * (0.5 * h)));
    let k3 = f(t + 0.5 * h, &(x + &k2 * (0.5 * h)));
    let k4 = f(t + h, &(x + &k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Integrates `ẋ = f(t, x)` with `steps` fixed RK4 steps from `t = 0`.
pub fn integrate<F>(f: F, x0: &DVector<f64>, h: f64, steps: usize) -> DVector<f64>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    (0..steps).fold(x0.clone(), |x, k| rk4_step(&f, k as f64 * h, &x, h))
}

/// Number of steps covering `[0, horizon]` with step `h`.
fn step_count(horizon: f64, h: f64) -> usize {
    (horizon / h - 1e-9).ceil().max(0.0) as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub x0: DVector<f64>,
    pub tau: f64,
    pub horizon: f64,
    pub h: f64,
}

/// Samples on the grid `t_k = k h`; row `k` holds `x_k` and the inputs held over `[t_k, t_{k+1})`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub u_s: Vec<Vec<f64>>,
    pub u_v: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub v: Vec<f64>,
    pub eta: Vec<f64>,
    pub zeta: Vec<f64>,
    pub kkt_residual: Vec<f64>,
    pub attack_active: Vec<bool>,
    /// Set when the run stopped early.
    pub error: Option<String>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

pub fn simulate(
    ctx: &ControlContext,
    attack: &AttackSignal,
    dist: &DisturbanceModel,
    params: &SimParams,
) -> Result<Trajectory> {
    let sys = ctx.sys;
    let n = sys.n();
    if params.x0.len() != n {
        return Err(Error::Dimension(format!("x0 has {} entries, n = {n}", params.x0.len())));
    }
    if !(params.h > 0.0) || !(params.horizon >= params.h) {
        return Err(Error::InvalidArgument(format!(
            "need h > 0 and T >= h, got h = {} and T = {}",
            params.h, params.horizon
        )));
    }
    if !(params.tau >= 0.0) {
        return Err(Error::InvalidArgument(format!("attack time must be >= 0, got {}", params.tau)));
    }
    if !(ctx.bar.value(&params.x0) + ctx.c < 0.0) {
        return Err(Error::InvalidArgument("x0 must lie in the interior of S_c".into()));
    }
    if attack.clamp_box.dim() != sys.m_v() {
        return Err(Error::Dimension(format!(
            "attack acts on {} channels, m_v = {}",
            attack.clamp_box.dim(),
            sys.m_v()
        )));
    }

    let steps = step_count(params.horizon, params.h);
    let mut traj = Trajectory::default();
    let mut x = params.x0.clone();
    for k in 0..=steps {
        let t = k as f64 * params.h;
        let active = t >= params.tau;
        traj.t.push(t);
        traj.x.push(x.clone());
        traj.b.push(ctx.bar.value(&x));
        traj.v.push(ctx.lyap.value(&x));
        traj.attack_active.push(active);

        let fb = match feedback(&x, ctx) {
            Ok(fb) => fb,
            Err(e @ Error::QpInfeasible { .. }) => {
                traj.u_s.push(vec![f64::NAN; sys.m_s()]);
                traj.u_v.push(vec![f64::NAN; sys.m_v()]);
                for col in [&mut traj.eta, &mut traj.zeta, &mut traj.kkt_residual] {
                    col.push(f64::NAN);
                }
                traj.error = Some(format!("t = {t}: {e}"));
                return Ok(traj);
            }
            Err(e) => return Err(e),
        };
        let u_v = if active { attack.value(t - params.tau).unwrap_or_else(|| fb.v_v.clone()) } else { fb.v_v.clone() };
        traj.eta.push(fb.eta);
        traj.zeta.push(fb.zeta);
        traj.kkt_residual.push(fb.kkt_residual);

        if k < steps {
            let us = DVector::from_column_slice(&fb.u_s);
            let uv = DVector::from_column_slice(&u_v);
            let field = |s: f64, y: &DVector<f64>| sys.vector_field(y, &uv, &us, &dist.at(s, n));
            x = rk4_step(&field, t, &x, params.h);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { x: x.iter().copied().collect(), what: format!("state after t = {t}") });
            }
        }
        traj.u_s.push(fb.u_s);
        traj.u_v.push(u_v);
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SafetyReport {
    #[serde(rename = "max_B")]
    pub max_b: f64,
    pub first_violation_time: Option<f64>,
    /// Smallest `R - |x - x_o|` over the samples (negative outside `S`).
    pub min_distance_to_boundary: f64,
}

pub fn monitor(traj: &Trajectory, bar: &dyn Barrier) -> Result<SafetyReport> {
    if traj.is_empty() {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    }
    let max_b = traj.b.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let first_violation_time = traj.b.iter().position(|&b| b > 0.0).map(|k| traj.t[k]);
    let min_distance_to_boundary = traj
        .x
        .iter()
        .map(|x| bar.radius() - (x - bar.center()).norm())
        .fold(f64::INFINITY, f64::min);
    Ok(SafetyReport { max_b, first_violation_time, min_distance_to_boundary })
}

/// Uniform sample from the ball `|x - center| ≤ radius`.
pub fn sample_ball(center: &DVector<f64>, radius: f64, seed: u64) -> DVector<f64> {
    let n = center.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir = loop {
        let g = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let norm: f64 = g.norm();
        if norm > 1e-12 {
            break g / norm;
        }
    };
    let u: f64 = rng.random();
    center + dir * (radius * u.powf(1.0 / n as f64))
}

/// Seeded default initial state inside `S_c`.
pub fn default_x0(bar: &dyn Barrier, c: f64, seed: u64) -> Result<DVector<f64>> {
    let r_c = bar
        .boundary_radius(c)
        .ok_or_else(|| Error::InvalidArgument(format!("S_c has no interior for c = {c}")))?;
    Ok(sample_ball(bar.center(), X0_RADIUS_FRACTION * r_c, seed))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub attack: AttackSignal,
    pub tau: f64,
    pub disturbance: DisturbanceModel,
    pub x0: Option<DVector<f64>>,
    pub seed: u64,
    /// The attack exceeds the certified box; safety is not guaranteed.
    pub demonstration: bool,
}

/// Square-wave period and sine frequency used for the oscillating attacks.
pub const STANDARD_SQUARE_PERIOD: f64 = 1.0;
pub const STANDARD_SINE_OMEGA: f64 = std::f64::consts::TAU;
pub const STANDARD_TAU: f64 = 0.436;
pub const STANDARD_DWELL: f64 = 0.1;

/// The six attack scenarios: two oversized constant attacks followed by four
/// attacks confined to the certified box `uv_tilde`.
pub fn standard_scenarios(uv_tilde: &BoxSet, delta: f64, n: usize, seed: u64) -> Result<Vec<Scenario>> {
    let m = uv_tilde.dim();
    let dist = DisturbanceModel::new(DisturbanceKind::Rotating { dwell: STANDARD_DWELL }, delta, seed, n)?;
    let make = |name: &str, kind: AttackKind, clamp: BoxSet, demonstration: bool| -> Result<Scenario> {
        Ok(Scenario {
            name: name.to_string(),
            attack: AttackSignal::new(kind, clamp)?,
            tau: STANDARD_TAU,
            disturbance: dist.clone(),
            x0: None,
            seed,
            demonstration,
        })
    };
    let amplitude = uv_tilde.magnitudes();
    Ok(vec![
        make("attack1", AttackKind::Constant { level: vec![20.0; m] }, BoxSet::symmetric(m, 20.0), true)?,
        make("attack2", AttackKind::Constant { level: vec![15.0; m] }, BoxSet::symmetric(m, 15.0), true)?,
        make("attack3", AttackKind::Constant { level: uv_tilde.upper.clone() }, uv_tilde.clone(), false)?,
        make("attack4", AttackKind::Constant { level: uv_tilde.lower.clone() }, uv_tilde.clone(), false)?,
        make(
            "attack5",
            AttackKind::Square { amplitude: amplitude.clone(), period: STANDARD_SQUARE_PERIOD, phase: 0.0 },
            uv_tilde.clone(),
            false,
        )?,
        make("attack6", AttackKind::Sine { amplitude, omega: STANDARD_SINE_OMEGA, phase: 0.0 }, uv_tilde.clone(), false)?,
    ])
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub name: String,
    pub demonstration: bool,
    pub trajectory: Trajectory,
    pub report: SafetyReport,
    pub runtime_s: f64,
}

impl ScenarioOutcome {
    /// Safe within the discretization allowance and not stopped early.
    pub fn safe(&self, tol: f64) -> bool {
        self.trajectory.error.is_none() && self.report.max_b <= tol
    }
}

pub fn run_scenarios(
    ctx: &ControlContext,
    scenarios: &[Scenario],
    horizon: f64,
    h: f64,
) -> Result<Vec<ScenarioOutcome>> {
    scenarios
        .iter()
        .map(|sc| {
            let start = Instant::now();
            let x0 = match &sc.x0 {
                Some(x) => x.clone(),
                None => default_x0(ctx.bar, ctx.c, sc.seed)?,
            };
            let params = SimParams { x0, tau: sc.tau, horizon, h };
            let trajectory = simulate(ctx, &sc.attack, &sc.disturbance, &params)?;
            let report = monitor(&trajectory, ctx.bar)?;
            Ok(ScenarioOutcome {
                name: sc.name.clone(),
                demonstration: sc.demonstration,
                trajectory,
                report,
                runtime_s: start.elapsed().as_secs_f64(),
            })
        })
        .collect()
}
