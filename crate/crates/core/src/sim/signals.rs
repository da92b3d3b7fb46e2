use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::plant::BoxSet;
use crate::{Error, Result};

/// Shape of the signal the attacker writes to `u_v` once the attack starts.
/// Times are measured from the attack start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackKind {
    /// No override: the nominal QP input stays applied.
    None,
    Constant { level: Vec<f64> },
    /// `amplitude · sign(sin(2π t / period + phase))`, with `sign(0) = 1`.
    Square { amplitude: Vec<f64>, period: f64, #[serde(default)] phase: f64 },
    /// `amplitude · sin(omega t + phase)`
    Sine { amplitude: Vec<f64>, omega: f64, #[serde(default)] phase: f64 },
    /// Zero-order hold through `(time, value)` pairs; the first value also
    /// covers times before the first entry.
    Table { times: Vec<f64>, values: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackSignal {
    pub kind: AttackKind,
    /// Physical bound on what the attacker can apply.
    pub clamp_box: BoxSet,
}

impl AttackSignal {
    pub fn new(kind: AttackKind, clamp_box: BoxSet) -> Result<Self> {
        let m = clamp_box.dim();
        if clamp_box.is_empty() {
            return Err(Error::EmptyBox("attack clamp box"));
        }
        let check = |v: &Vec<f64>, what: &str| {
            if v.len() != m {
                Err(Error::Dimension(format!("attack {what} has {} channels, expected {m}", v.len())))
            } else if v.iter().any(|x| !x.is_finite()) {
                Err(Error::InvalidArgument(format!("attack {what} is not finite")))
            } else {
                Ok(())
            }
        };
        match &kind {
            AttackKind::None => {}
            AttackKind::Constant { level } => check(level, "level")?,
            AttackKind::Square { amplitude, period, .. } => {
                check(amplitude, "amplitude")?;
                if !(*period > 0.0) {
                    return Err(Error::InvalidArgument(format!("square period must be positive, got {period}")));
                }
            }
            AttackKind::Sine { amplitude, omega, .. } => {
                check(amplitude, "amplitude")?;
                if !omega.is_finite() {
                    return Err(Error::InvalidArgument("sine frequency must be finite".into()));
                }
            }
            AttackKind::Table { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(Error::InvalidArgument("attack table needs matching, non-empty times and values".into()));
                }
                if times.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::InvalidArgument("attack table times must increase strictly".into()));
                }
                for v in values {
                    check(v, "table value")?;
                }
            }
        }
        Ok(AttackSignal { kind, clamp_box })
    }

    /// Clamped attack value at time `s` after the attack start, or `None` when
    /// the attacker does not override the input.
    pub fn value(&self, s: f64) -> Option<Vec<f64>> {
        let raw: Vec<f64> = match &self.kind {
            AttackKind::None => return None,
            AttackKind::Constant { level } => level.clone(),
            AttackKind::Square { amplitude, period, phase } => {
                let arg = std::f64::consts::TAU * s / period + phase;
                let sign = if arg.sin() >= 0.0 { 1.0 } else { -1.0 };
                amplitude.iter().map(|a| a * sign).collect()
            }
            AttackKind::Sine { amplitude, omega, phase } => {
                let w = (omega * s + phase).sin();
                amplitude.iter().map(|a| a * w).collect()
            }
            AttackKind::Table { times, values } => {
                let k = times.partition_point(|&t| t <= s).saturating_sub(1);
                values[k].clone()
            }
        };
        Some(self.clamp_box.clamp(&raw))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisturbanceKind {
    Zero,
    ConstantDirection { direction: Vec<f64> },
    /// A fresh seeded random direction every `dwell` seconds.
    Rotating { dwell: f64 },
    /// Direction `(cos ωt, sin ωt, 0, ...)`; `sign(cos ωt)` when `n = 1`.
    SineDirection { omega: f64 },
}

/// `d(t) = δ · e(t)` with `|e(t)| = 1` (or `d = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceModel {
    pub kind: DisturbanceKind,
    pub delta: f64,
    pub seed: u64,
}

impl DisturbanceModel {
    pub fn zero() -> Self {
        DisturbanceModel { kind: DisturbanceKind::Zero, delta: 0.0, seed: 0 }
    }

    pub fn new(kind: DisturbanceKind, delta: f64, seed: u64, n: usize) -> Result<Self> {
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::InvalidArgument(format!("disturbance bound must be >= 0, got {delta}")));
        }
        match &kind {
            DisturbanceKind::ConstantDirection { direction } => {
                let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
                if direction.len() != n || !(norm > 0.0) || !norm.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "disturbance direction must be a non-zero vector in R^{n}"
                    )));
                }
            }
            DisturbanceKind::Rotating { dwell } if !(*dwell > 0.0) => {
                return Err(Error::InvalidArgument(format!("dwell time must be positive, got {dwell}")));
            }
            DisturbanceKind::SineDirection { omega } if !omega.is_finite() => {
                return Err(Error::InvalidArgument("disturbance frequency must be finite".into()));
            }
            _ => {}
        }
        Ok(DisturbanceModel { kind, delta, seed })
    }

    pub fn at(&self, t: f64, n: usize) -> DVector<f64> {
        let unit = match &self.kind {
            DisturbanceKind::Zero => return DVector::zeros(n),
            DisturbanceKind::ConstantDirection { direction } => {
                let d = DVector::from_column_slice(direction);
                let norm = d.norm();
                d / norm
            }
            DisturbanceKind::Rotating { dwell } => {
                let k = (t / dwell).floor().max(0.0) as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(k);
                loop {
                    let g = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
                    let norm: f64 = g.norm();
                    if norm > 1e-12 {
                        break g / norm;
                    }
                }
            }
            DisturbanceKind::SineDirection { omega } => {
                let mut d = DVector::zeros(n);
                if n == 1 {
                    d[0] = if (omega * t).cos() >= 0.0 { 1.0 } else { -1.0 };
                } else {
                    d[0] = (omega * t).cos();
                    d[1] = (omega * t).sin();
                }
                d
            }
        };
        unit * self.delta
    }
}
