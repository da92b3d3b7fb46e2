//! Command implementations behind the `viabkit` binary.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand};
use nalgebra::DVector;
use serde::Serialize;

use viabkit::config::{self, RunConfig, Setup};
use viabkit::geometry::{d_m_n, d_m_tetrahedral, sample_sphere, triangulate};
use viabkit::output::{format_f64, to_json_string, write_csv, write_json, write_trajectory_csv};
use viabkit::plant::Barrier;
use viabkit::qpcontrol::{build_qp, check_strict_complementarity, feedback, solve_qp, ControlContext};
use viabkit::sim::run_scenarios;
use viabkit::viability::{
    algorithm1, dense_verify, worst_case_over_vulnerable_subsets, ViabilityResult, DEFAULT_SUBSET_CAP,
};

/// Allowance on `max B` for the safety verdict of a simulated run.
pub const SAFETY_TOLERANCE: f64 = 1e-3;

/// Process exit status: 0 success, 1 error, 2 negative verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    Negative,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Success => 0,
            Status::Negative => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "viabkit", version, about = "Viability domains and attack-tolerant input bounds")]
pub struct Cli {
    /// Run configuration (TOML); `threestate`, `integrator2d` and `integrator3d` name the bundled ones.
    #[arg(long, global = true)]
    pub config: Option<String>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search for a certified (c, Ũ_v) and write the result JSON.
    Compute {
        /// Repeat the search for every non-empty set of vulnerable inputs.
        #[arg(long)]
        subsets: bool,
        /// Largest input count accepted by --subsets.
        #[arg(long, default_value_t = DEFAULT_SUBSET_CAP)]
        max_inputs: usize,
    },
    /// Re-check a certified result on a denser, independent boundary sample.
    Verify {
        #[arg(long)]
        result: PathBuf,
        #[arg(long, default_value_t = 10)]
        oversample: usize,
    },
    /// Print the QP rows, solution and complementarity report at one state.
    Check {
        #[arg(long)]
        result: PathBuf,
        /// Comma-separated state, e.g. `0.1,0,-0.2`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        state: Vec<f64>,
    },
    /// Run attack scenarios in closed loop and write CSV traces plus a summary.
    Simulate {
        #[arg(long)]
        result: PathBuf,
        /// Comma-separated scenario names; all when omitted.
        #[arg(long, value_delimiter = ',')]
        scenario: Vec<String>,
        /// Run even if the result is not certified (no guarantee applies).
        #[arg(long)]
        allow_uncertified: bool,
        /// Overrides sim.T.
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Sample and triangulate a sphere; writes points.csv, faces.csv and summary.json.
    Mesh {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        np: usize,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
    },
    /// Print the spacing bound d_M for n-dimensional spheres of radius rc.
    Dm {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        rc: f64,
        /// Use the three-dimensional tetrahedral bound instead.
        #[arg(long)]
        tetrahedral: bool,
    },
    /// Print the effective configuration with defaults filled in.
    Config,
}

pub fn load_config(spec: Option<&str>) -> anyhow::Result<RunConfig> {
    let spec = spec.ok_or_else(|| anyhow!("--config is required for this command"))?;
    let path = Path::new(spec);
    if !path.exists() {
        if let Some(text) = config::bundled(spec) {
            return Ok(RunConfig::parse(text)?);
        }
    }
    Ok(RunConfig::load(path)?)
}

pub fn read_result(path: &Path) -> anyhow::Result<ViabilityResult> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{} is not a viability result", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn setup(cli: &Cli) -> anyhow::Result<(RunConfig, Setup)> {
    let cfg = load_config(cli.config.as_deref())?;
    let mut s = cfg.setup()?;
    if let Some(seed) = cli.seed {
        s.search.seed = seed;
    }
    Ok((cfg, s))
}

fn check_result_matches(setup: &Setup, result: &ViabilityResult) -> anyhow::Result<()> {
    if result.uv_tilde.dim() != setup.sys.m_v() {
        bail!("result box has {} components but the config has mv = {}", result.uv_tilde.dim(), setup.sys.m_v());
    }
    if result.delta != setup.sys.delta {
        bail!("result was computed for delta = {} but the config has {}", result.delta, setup.sys.delta);
    }
    Ok(())
}

fn control_context<'a>(cfg: &RunConfig, s: &'a Setup, result: &'a ViabilityResult) -> ControlContext<'a> {
    ControlContext {
        sys: &s.sys,
        bar: &s.bar,
        lyap: &s.lyap,
        c: result.c,
        uv_tilde: &result.uv_tilde,
        q: cfg.qp.q,
        l_b: result.l_b_used,
        l_v: s.l_v,
    }
}

#[derive(Serialize)]
struct SubsetEntry<'a> {
    /// 1-based input indices in (secure, vulnerable) column order.
    vulnerable: Vec<usize>,
    result: &'a ViabilityResult,
}

#[derive(Serialize)]
struct SubsetSummary<'a> {
    subsets: Vec<SubsetEntry<'a>>,
    aggregate_c: Option<f64>,
}

fn cmd_compute(cli: &Cli, subsets: bool, max_inputs: usize) -> anyhow::Result<Status> {
    let (_, s) = setup(cli)?;
    if subsets {
        let report = worst_case_over_vulnerable_subsets(&s.sys, &s.bar, &s.search, &s.overrides, max_inputs)?;
        let summary = SubsetSummary {
            subsets: report
                .outcomes
                .iter()
                .map(|o| SubsetEntry { vulnerable: o.vulnerable.iter().map(|i| i + 1).collect(), result: &o.result })
                .collect(),
            aggregate_c: report.aggregate_c,
        };
        emit(cli.out.as_deref(), &to_json_string(&summary)?)?;
        return Ok(if report.aggregate_c.is_some() { Status::Success } else { Status::Negative });
    }
    let result = algorithm1(&s.sys, &s.bar, &s.search, &s.overrides)?;
    emit(cli.out.as_deref(), &to_json_string(&result)?)?;
    Ok(if result.is_certified() { Status::Success } else { Status::Negative })
}

#[derive(Serialize)]
struct VerifyReport {
    pass: bool,
    worst_margin: f64,
    tolerance: f64,
    points: usize,
    violations: usize,
    seed: u64,
    oversample: usize,
}

fn cmd_verify(cli: &Cli, result_path: &Path, oversample: usize) -> anyhow::Result<Status> {
    let (_, s) = setup(cli)?;
    let result = read_result(result_path)?;
    check_result_matches(&s, &result)?;
    let seed = cli.seed.unwrap_or(result.seed);
    let report = dense_verify(&result, &s.sys, &s.bar, oversample, seed)?;
    let summary = VerifyReport {
        pass: report.pass,
        worst_margin: report.worst_margin,
        tolerance: report.tolerance,
        points: report.margins.len(),
        violations: report.violating_indices.len(),
        seed,
        oversample,
    };
    emit(cli.out.as_deref(), &to_json_string(&summary)?)?;
    Ok(if report.pass { Status::Success } else { Status::Negative })
}

fn cmd_check(cli: &Cli, result_path: &Path, state: &[f64]) -> anyhow::Result<Status> {
    let (cfg, s) = setup(cli)?;
    let result = read_result(result_path)?;
    check_result_matches(&s, &result)?;
    if state.len() != s.sys.n() {
        bail!("--state has {} entries, the system has n = {}", state.len(), s.sys.n());
    }
    let x = DVector::from_column_slice(state);
    let ctx = control_context(&cfg, &s, &result);
    let spec = build_qp(&x, &ctx)?;
    let sol = solve_qp(&spec)?;
    let complementarity = check_strict_complementarity(&spec, &sol, 1e-9);
    let fb = feedback(&x, &ctx).ok();
    let report = serde_json::json!({
        "state": state,
        "B": s.bar.value(&x),
        "inside_S_c": s.bar.value(&x) + result.c <= 0.0,
        "spec": spec,
        "solution": sol,
        "strict_complementarity": complementarity,
        "feedback": fb,
    });
    emit(cli.out.as_deref(), &to_json_string(&report)?)?;
    Ok(Status::Success)
}

#[derive(Serialize)]
struct ScenarioSummary {
    name: String,
    demonstration: bool,
    safe: bool,
    #[serde(rename = "max_B")]
    max_b: f64,
    first_violation_time: Option<f64>,
    min_distance_to_boundary: f64,
    steps: usize,
    stopped_early: Option<String>,
}

#[derive(Serialize)]
struct SimulationSummary {
    certified: bool,
    c: f64,
    #[serde(rename = "Uv_tilde")]
    uv_tilde: viabkit::plant::BoxSet,
    seed: u64,
    h: f64,
    horizon: f64,
    safety_tolerance: f64,
    scenarios: Vec<ScenarioSummary>,
}

fn cmd_simulate(
    cli: &Cli,
    result_path: &Path,
    names: &[String],
    allow_uncertified: bool,
    horizon: Option<f64>,
) -> anyhow::Result<Status> {
    let (cfg, s) = setup(cli)?;
    let result = read_result(result_path)?;
    check_result_matches(&s, &result)?;
    if !result.is_certified() && !allow_uncertified {
        bail!("the result is not certified; pass --allow-uncertified to simulate anyway");
    }
    let seed = cli.seed.unwrap_or(result.seed);
    let mut scenarios = cfg.scenarios(&result.uv_tilde, seed)?;
    if !names.is_empty() {
        for n in names {
            if !scenarios.iter().any(|sc| &sc.name == n) {
                let known: Vec<&str> = scenarios.iter().map(|sc| sc.name.as_str()).collect();
                bail!("unknown scenario {n:?}; known: {}", known.join(", "));
            }
        }
        scenarios.retain(|sc| names.contains(&sc.name));
    }
    let out_dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("sim_out"));
    fs::create_dir_all(&out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;

    let horizon = horizon.unwrap_or(cfg.sim.horizon);
    let ctx = control_context(&cfg, &s, &result);
    let outcomes = run_scenarios(&ctx, &scenarios, horizon, cfg.sim.h)?;

    let mut log = String::new();
    let mut summaries = Vec::new();
    for o in &outcomes {
        let file = fs::File::create(out_dir.join(format!("{}.csv", o.name)))?;
        write_trajectory_csv(std::io::BufWriter::new(file), &o.trajectory, s.sys.m_s(), s.sys.m_v())?;
        log.push_str(&format!("{} runtime_s={:.3}\n", o.name, o.runtime_s));
        summaries.push(ScenarioSummary {
            name: o.name.clone(),
            demonstration: o.demonstration,
            safe: o.safe(SAFETY_TOLERANCE),
            max_b: o.report.max_b,
            first_violation_time: o.report.first_violation_time,
            min_distance_to_boundary: o.report.min_distance_to_boundary,
            steps: o.trajectory.len(),
            stopped_early: o.trajectory.error.clone(),
        });
    }
    let all_safe = summaries.iter().filter(|s| !s.demonstration).all(|s| s.safe);
    let summary = SimulationSummary {
        certified: result.is_certified(),
        c: result.c,
        uv_tilde: result.uv_tilde.clone(),
        seed,
        h: cfg.sim.h,
        horizon,
        safety_tolerance: SAFETY_TOLERANCE,
        scenarios: summaries,
    };
    write_json(&out_dir.join("summary.json"), &summary)?;
    fs::write(out_dir.join("run.log"), log)?;
    for sc in &summary.scenarios {
        let tag = if sc.demonstration { " (demonstration)" } else { "" };
        println!("{}{}: max_B = {} {}", sc.name, tag, format_f64(sc.max_b), if sc.safe { "safe" } else { "UNSAFE" });
    }
    Ok(if all_safe { Status::Success } else { Status::Negative })
}

#[derive(Serialize)]
struct MeshSummary {
    n: usize,
    #[serde(rename = "N_p")]
    n_p: usize,
    radius: f64,
    seed: u64,
    faces: usize,
    d_a: f64,
    #[serde(rename = "d_M_n")]
    d_m_n: f64,
}

fn cmd_mesh(cli: &Cli, n: usize, np: usize, radius: f64) -> anyhow::Result<Status> {
    let seed = cli.seed.unwrap_or(0);
    let mesh = triangulate(sample_sphere(n, np, &DVector::zeros(n), radius, seed)?)?;
    let d_a = mesh.d_a.ok_or_else(|| anyhow!("triangulation produced no faces"))?;
    let out_dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("mesh_out"));
    fs::create_dir_all(&out_dir)?;
    let header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    write_csv(
        fs::File::create(out_dir.join("points.csv"))?,
        &header,
        mesh.points.iter().map(|p| p.iter().copied().collect()),
    )?;
    let mut faces = String::new();
    faces.push_str(&(1..=n).map(|i| format!("v{i}")).collect::<Vec<_>>().join(","));
    faces.push('\n');
    for f in &mesh.faces {
        faces.push_str(&f.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(","));
        faces.push('\n');
    }
    fs::write(out_dir.join("faces.csv"), faces)?;
    let summary = MeshSummary {
        n,
        n_p: mesh.len(),
        radius,
        seed,
        faces: mesh.faces.len(),
        d_a,
        d_m_n: d_m_n(n, radius)?,
    };
    write_json(&out_dir.join("summary.json"), &summary)?;
    println!("d_a = {d_a}");
    Ok(Status::Success)
}

fn cmd_dm(n: usize, rc: f64, tetrahedral: bool) -> anyhow::Result<Status> {
    let value = if tetrahedral {
        if n != 3 {
            bail!("the tetrahedral bound is defined for n = 3 only");
        }
        d_m_tetrahedral(rc)?
    } else {
        d_m_n(n, rc)?
    };
    println!("{value}");
    Ok(Status::Success)
}

pub fn run(cli: &Cli) -> anyhow::Result<Status> {
    match &cli.command {
        Command::Compute { subsets, max_inputs } => cmd_compute(cli, *subsets, *max_inputs),
        Command::Verify { result, oversample } => cmd_verify(cli, result, *oversample),
        Command::Check { result, state } => cmd_check(cli, result, state),
        Command::Simulate { result, scenario, allow_uncertified, horizon } => {
            cmd_simulate(cli, result, scenario, *allow_uncertified, *horizon)
        }
        Command::Mesh { n, np, radius } => cmd_mesh(cli, *n, *np, *radius),
        Command::Dm { n, rc, tetrahedral } => cmd_dm(*n, *rc, *tetrahedral),
        Command::Config => {
            let cfg = load_config(cli.config.as_deref())?;
            emit(cli.out.as_deref(), &cfg.effective_toml()?)?;
            Ok(Status::Success)
        }
    }
}
