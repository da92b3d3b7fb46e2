//! TOML run configuration shared by all commands.
//!
//! ```toml
//! [system]
//! n = 2
//! mv = 1
//! ms = 1
//! A = [[0.0, 1.0], [-1.0, 0.0]]
//! Bv = [[1.0], [0.0]]
//! Bs = [[0.0], [1.0]]
//! delta = 0.05
//! Uv = { lower = [-1.0], upper = [1.0] }
//! Us = { lower = [-2.0], upper = [2.0] }
//!
//! [[system.poly]]      # adds coeff * x1^3 to the first equation
//! eq = 1
//! coeff = 0.01
//! exponents = [3, 0]
//!
//! [barrier]
//! center = [0.0, 0.0]
//! radius = 1.0
//! ```
//!
//! `lyapunov`, `constants`, `search`, `qp`, `sim` and `scenarios` are optional.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::plant::{BoxSet, ControlAffineSystem, PolyTerm, QuadraticLyapunov, SphereBarrier};
use crate::sim::{AttackKind, AttackSignal, DisturbanceKind, DisturbanceModel, Scenario};
use crate::viability::{ConstantOverrides, LhMode, SearchParams};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxConfig {
    fn to_box(&self, what: &str) -> Result<BoxSet> {
        let b = BoxSet::new(self.lower.clone(), self.upper.clone()).map_err(|e| Error::Config(format!("{what}: {e}")))?;
        if b.is_empty() {
            return Err(Error::Config(format!("{what}: lower bound exceeds upper bound")));
        }
        Ok(b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyConfig {
    /// 1-based state equation.
    pub eq: usize,
    pub coeff: f64,
    pub exponents: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub n: usize,
    pub mv: usize,
    pub ms: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "Bv", default)]
    pub bv: Vec<Vec<f64>>,
    #[serde(rename = "Bs", default)]
    pub bs: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub poly: Vec<PolyConfig>,
    #[serde(default)]
    pub delta: f64,
    #[serde(rename = "Uv")]
    pub uv: BoxConfig,
    #[serde(rename = "Us")]
    pub us: BoxConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierConfig {
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovConfig {
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsConfig {
    #[serde(rename = "lB", skip_serializing_if = "Option::is_none")]
    pub l_b: Option<f64>,
    #[serde(rename = "lV", skip_serializing_if = "Option::is_none")]
    pub l_v: Option<f64>,
    #[serde(rename = "lH", skip_serializing_if = "Option::is_none")]
    pub l_h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub eps1: f64,
    pub eps2: f64,
    #[serde(rename = "Nc0")]
    pub n_c0: usize,
    #[serde(rename = "Nmax")]
    pub n_max: usize,
    pub seed: u64,
    pub lh_mode: LhMode,
    pub lh_density: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { eps1: 0.1, eps2: 0.05, n_c0: 256, n_max: 8192, seed: 0, lh_mode: LhMode::Fixed, lh_density: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QpConfig {
    pub q: f64,
}

impl Default for QpConfig {
    fn default() -> Self {
        QpConfig { q: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub h: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub tau: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    pub disturbance: DisturbanceKind,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            h: crate::sim::DEFAULT_STEP,
            horizon: crate::sim::DEFAULT_HORIZON,
            tau: 0.0,
            x0: None,
            disturbance: DisturbanceKind::Rotating { dwell: crate::sim::STANDARD_DWELL },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub attack: AttackKind,
    /// Attacker bound; defaults to the certified box.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clamp: Option<BoxConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub disturbance: Option<DisturbanceKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub demonstration: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub barrier: BarrierConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<LyapunovConfig>,
    #[serde(default)]
    pub constants: ConstantsConfig,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default)]
    pub qp: QpConfig,
    #[serde(default)]
    pub sim: SimConfig,
    /// Empty means the built-in six-scenario suite.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scenarios: Vec<ScenarioConfig>,
}

fn matrix(rows: &[Vec<f64>], nrows: usize, ncols: usize, what: &str) -> Result<DMatrix<f64>> {
    if ncols == 0 && (rows.is_empty() || rows.iter().all(|r| r.is_empty())) {
        return Ok(DMatrix::zeros(nrows, 0));
    }
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config(format!("{what} must be {nrows}x{ncols}")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |r, c| rows[r][c]))
}

fn positive(v: f64, what: &str) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} must be positive, got {v}")))
    }
}

/// Everything the commands need, built from a validated config.
pub struct Setup {
    pub sys: ControlAffineSystem,
    pub bar: SphereBarrier,
    pub lyap: QuadraticLyapunov,
    pub search: SearchParams,
    pub overrides: ConstantOverrides,
    pub l_v: f64,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.setup()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// The configuration with all defaults filled in, as TOML.
    pub fn effective_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn system(&self) -> Result<ControlAffineSystem> {
        let s = &self.system;
        if s.n == 0 {
            return Err(Error::Config("system.n must be positive".into()));
        }
        let a = matrix(&s.a, s.n, s.n, "system.A")?;
        let bv = matrix(&s.bv, s.n, s.mv, "system.Bv")?;
        let bs = matrix(&s.bs, s.n, s.ms, "system.Bs")?;
        let uv = s.uv.to_box("system.Uv")?;
        let us = s.us.to_box("system.Us")?;
        if uv.dim() != s.mv || us.dim() != s.ms {
            return Err(Error::Config(format!(
                "system.Uv/Us have {}/{} components, expected mv = {} and ms = {}",
                uv.dim(),
                us.dim(),
                s.mv,
                s.ms
            )));
        }
        if uv.lower.iter().chain(&uv.upper).chain(&us.lower).chain(&us.upper).any(|v| !v.is_finite()) {
            return Err(Error::Config("input bounds must be finite".into()));
        }
        let poly = s
            .poly
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if p.eq == 0 || p.eq > s.n || p.exponents.len() != s.n {
                    return Err(Error::Config(format!(
                        "system.poly[{i}]: eq must be in 1..={} and exponents must have {} entries",
                        s.n, s.n
                    )));
                }
                Ok(PolyTerm { equation: p.eq - 1, coeff: p.coeff, exponents: p.exponents.clone() })
            })
            .collect::<Result<Vec<_>>>()?;
        ControlAffineSystem::new(a, poly, bv, bs, uv, us, s.delta).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn setup(&self) -> Result<Setup> {
        let sys = self.system()?;
        let n = sys.n();
        if self.barrier.center.len() != n {
            return Err(Error::Config(format!("barrier.center must have {n} entries")));
        }
        let bar = SphereBarrier::new(DVector::from_column_slice(&self.barrier.center), self.barrier.radius)
            .map_err(|e| Error::Config(e.to_string()))?;
        let p = match &self.lyapunov {
            Some(l) => matrix(&l.p, n, n, "lyapunov.P")?,
            None => DMatrix::identity(n, n),
        };
        let lyap = QuadraticLyapunov::new(p).map_err(|e| Error::Config(format!("lyapunov.P: {e}")))?;

        let c = &self.constants;
        for (v, name) in [(c.l_b, "constants.lB"), (c.l_v, "constants.lV"), (c.l_h, "constants.lH")] {
            if let Some(v) = v {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
                }
            }
        }

        let s = &self.search;
        positive(s.eps1, "search.eps1")?;
        positive(s.eps2, "search.eps2")?;
        if s.n_c0 < n + 1 {
            return Err(Error::Config(format!("search.Nc0 = {} must be at least n + 1 = {}", s.n_c0, n + 1)));
        }
        if s.n_max <= s.n_c0 {
            return Err(Error::Config(format!("search.Nmax = {} must exceed search.Nc0 = {}", s.n_max, s.n_c0)));
        }
        if s.lh_density == 0 {
            return Err(Error::Config("search.lh_density must be positive".into()));
        }
        positive(self.qp.q, "qp.q")?;
        positive(self.sim.h, "sim.h")?;
        if !(self.sim.horizon >= self.sim.h) {
            return Err(Error::Config("sim.T must be at least sim.h".into()));
        }
        if !(self.sim.tau >= 0.0) {
            return Err(Error::Config("sim.tau must be >= 0".into()));
        }
        if let Some(x0) = &self.sim.x0 {
            if x0.len() != n {
                return Err(Error::Config(format!("sim.x0 must have {n} entries")));
            }
        }
        DisturbanceModel::new(self.sim.disturbance.clone(), sys.delta, 0, n).map_err(|e| Error::Config(format!("sim.disturbance: {e}")))?;
        for sc in &self.scenarios {
            if let Some(b) = &sc.clamp {
                b.to_box(&format!("scenario {}: clamp", sc.name))?;
            }
            if let Some(x0) = &sc.x0 {
                if x0.len() != n {
                    return Err(Error::Config(format!("scenario {}: x0 must have {n} entries", sc.name)));
                }
            }
        }

        let l_v = c.l_v.unwrap_or_else(|| lyap.lipschitz_on(&bar));
        Ok(Setup {
            search: SearchParams {
                eps1: s.eps1,
                eps2: s.eps2,
                n_c0: s.n_c0,
                n_max: s.n_max,
                seed: s.seed,
                lh_mode: s.lh_mode,
                lh_density: s.lh_density,
            },
            overrides: ConstantOverrides { l_b: c.l_b, l_h: c.l_h },
            l_v,
            sys,
            bar,
            lyap,
        })
    }

    /// Scenarios from the config, or the built-in suite when none are listed.
    /// `uv_tilde` is the certified box used as the default attacker bound.
    pub fn scenarios(&self, uv_tilde: &BoxSet, seed: u64) -> Result<Vec<Scenario>> {
        let n = self.system.n;
        let delta = self.system.delta;
        if self.scenarios.is_empty() {
            return crate::sim::standard_scenarios(uv_tilde, delta, n, seed).map(|mut list| {
                for sc in &mut list {
                    sc.disturbance.kind = self.sim.disturbance.clone();
                    sc.tau = self.sim.tau;
                    sc.x0 = self.sim.x0.as_ref().map(|x| DVector::from_column_slice(x));
                }
                list
            });
        }
        self.scenarios
            .iter()
            .map(|sc| {
                let clamp = match &sc.clamp {
                    Some(b) => b.to_box(&format!("scenario {}: clamp", sc.name))?,
                    None => uv_tilde.clone(),
                };
                let kind = sc.disturbance.clone().unwrap_or_else(|| self.sim.disturbance.clone());
                Ok(Scenario {
                    name: sc.name.clone(),
                    attack: AttackSignal::new(sc.attack.clone(), clamp)
                        .map_err(|e| Error::Config(format!("scenario {}: {e}", sc.name)))?,
                    tau: sc.tau.unwrap_or(self.sim.tau),
                    disturbance: DisturbanceModel::new(kind, delta, seed, n)?,
                    x0: sc.x0.as_ref().or(self.sim.x0.as_ref()).map(|x| DVector::from_column_slice(x)),
                    seed,
                    demonstration: sc.demonstration,
                })
            })
            .collect()
    }
}

/// Looks up `<name>.cfg` among the configs shipped with the crate.
pub fn bundled(name: &str) -> Option<&'static str> {
    match name {
        "threestate" => Some(include_str!("../configs/threestate.cfg")),
        "integrator2d" => Some(include_str!("../configs/integrator2d.cfg")),
        "integrator3d" => Some(include_str!("../configs/integrator3d.cfg")),
        _ => None,
    }
}

pub const BUNDLED: [&str; 3] = ["threestate", "integrator2d", "integrator3d"];

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[system]
n = 2
mv = 1
ms = 1
A = [[0.0, 0.0], [0.0, 0.0]]
Bv = [[1.0], [0.0]]
Bs = [[0.0], [1.0]]
Uv = { lower = [-1.0], upper = [1.0] }
Us = { lower = [-1.0], upper = [1.0] }

[barrier]
center = [0.0, 0.0]
radius = 1.0
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.search, SearchConfig::default());
        assert_eq!(cfg.qp.q, 1.0);
        let setup = cfg.setup().unwrap();
        assert_eq!(setup.l_v, 2.0);
        let echoed = RunConfig::parse(&cfg.effective_toml().unwrap()).unwrap();
        assert_eq!(echoed, cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = MINIMAL.replace("radius = 1.0", "radius = 1.0\ncolour = 3");
        let err = RunConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("colour"), "{err}");
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn search_limits_validated() {
        let text = format!("{MINIMAL}\n[search]\nNc0 = 64\nNmax = 64\n");
        let err = RunConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("Nmax"), "{err}");
    }

    #[test]
    fn shape_errors_are_reported() {
        let text = MINIMAL.replace("Bv = [[1.0], [0.0]]", "Bv = [[1.0]]");
        assert!(RunConfig::parse(&text).unwrap_err().to_string().contains("system.Bv"));
        let text = MINIMAL.replace("center = [0.0, 0.0]", "center = [0.0]");
        assert!(RunConfig::parse(&text).is_err());
    }

    #[test]
    fn polynomial_equations_are_one_based() {
        let text = MINIMAL.replace("[barrier]", "[[system.poly]]\neq = 2\ncoeff = 0.5\nexponents = [1, 1]\n\n[barrier]");
        let sys = RunConfig::parse(&text).unwrap().system().unwrap();
        assert_eq!(sys.poly[0].equation, 1);
        let zero = text.replace("eq = 2", "eq = 0");
        assert!(RunConfig::parse(&zero).is_err());
    }

    #[test]
    fn bundled_configs_parse() {
        for name in BUNDLED {
            RunConfig::parse(bundled(name).unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn explicit_scenarios_default_to_certified_box() {
        let text = format!(
            "{MINIMAL}\n[[scenarios]]\nname = \"push\"\nattack = {{ kind = \"constant\", level = [3.0] }}\n"
        );
        let cfg = RunConfig::parse(&text).unwrap();
        let uv = BoxSet::symmetric(1, 0.4);
        let list = cfg.scenarios(&uv, 0).unwrap();
        assert_eq!(list.len(), 1);
        assert_eq!(list[0].attack.value(0.0), Some(vec![0.4]));
    }
}
