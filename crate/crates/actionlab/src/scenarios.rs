//! Named, parameterized problems with expected quantities.
//!
//! Each scenario builds its instance from validated parameters, runs the full
//! pipeline and evaluates a list of [`Check`]s. Every action scenario also gets
//! the generic certificate checks at the run tolerance.

use std::collections::{BTreeMap, BinaryHeap};
use std::cmp::{Ordering, Reverse};
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use actionlab_core::{
    build_torus_grid, discrete_differential, fiber_convex_envelope, sample_lagrangian, BoundaryCurrent,
    ControlError, ControlProblem, GridError, InitialCondition, LagrangianTable, PhaseGrid, StateGrid,
};
use serde::Serialize;

use crate::config::{ConfigError, Params, Value};
use crate::formats::{self, FormatError};
use crate::pipeline::{run_action, run_control, ActionRun, ControlRun, PipelineError};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("unknown scenario `{name}` (known: {known})")]
    Unknown { name: String, known: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Format(#[from] FormatError),
}

impl ScenarioError {
    /// Bad names and parameters are usage errors; the rest are run failures.
    pub fn is_usage(&self) -> bool {
        matches!(self, ScenarioError::Unknown { .. } | ScenarioError::Config(_))
    }
}

fn invalid(key: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Config(ConfigError::Invalid {
        key: key.to_string(),
        message: message.into(),
    })
}

// ---------------------------------------------------------------- parameters

#[derive(Debug, Clone, Copy)]
pub enum ParamKind {
    Count { default: usize, lo: usize, hi: usize },
    Real { default: f64, lo: f64, hi: f64 },
    Choice { default: &'static str, choices: &'static [&'static str] },
}

impl fmt::Display for ParamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamKind::Count { default, lo, hi } => write!(f, "integer in [{lo}, {hi}], default {default}"),
            ParamKind::Real { default, lo, hi } => write!(f, "real in [{lo}, {hi}], default {default}"),
            ParamKind::Choice { default, choices } => write!(f, "one of {}, default {default}", choices.join("|")),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ParamSpec {
    pub name: &'static str,
    pub kind: ParamKind,
    pub help: &'static str,
}

const fn count(name: &'static str, default: usize, lo: usize, hi: usize, help: &'static str) -> ParamSpec {
    ParamSpec {
        name,
        kind: ParamKind::Count { default, lo, hi },
        help,
    }
}

const fn real(name: &'static str, default: f64, lo: f64, hi: f64, help: &'static str) -> ParamSpec {
    ParamSpec {
        name,
        kind: ParamKind::Real { default, lo, hi },
        help,
    }
}

const fn choice(
    name: &'static str,
    default: &'static str,
    choices: &'static [&'static str],
    help: &'static str,
) -> ParamSpec {
    ParamSpec {
        name,
        kind: ParamKind::Choice { default, choices },
        help,
    }
}

/// Parameter values after defaults and range checks.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved(BTreeMap<&'static str, Value>);

impl Resolved {
    fn count(&self, key: &str) -> usize {
        match self.0.get(key) {
            Some(Value::Number(x)) => *x as usize,
            _ => unreachable!("count parameter `{key}` not resolved"),
        }
    }

    fn real(&self, key: &str) -> f64 {
        match self.0.get(key) {
            Some(Value::Number(x)) => *x,
            _ => unreachable!("real parameter `{key}` not resolved"),
        }
    }

    fn text(&self, key: &str) -> &str {
        match self.0.get(key) {
            Some(Value::Text(s)) => s,
            _ => unreachable!("text parameter `{key}` not resolved"),
        }
    }

    /// Values rendered as strings, for reports.
    pub fn rendered(&self) -> BTreeMap<String, String> {
        self.0
            .iter()
            .map(|(k, v)| {
                let s = match v {
                    Value::Number(x) => x.to_string(),
                    Value::Text(t) => t.clone(),
                };
                (k.to_string(), s)
            })
            .collect()
    }
}

// ---------------------------------------------------------------- checks

/// What a checked quantity must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Expect {
    Near { target: f64, tolerance: f64 },
    AtMost { bound: f64 },
    AtLeast { bound: f64 },
    /// A yes/no property, recorded as 1 or 0.
    True,
}

impl Expect {
    pub fn holds(&self, value: f64) -> bool {
        match *self {
            Expect::Near { target, tolerance } => (value - target).abs() <= tolerance,
            Expect::AtMost { bound } => value <= bound,
            Expect::AtLeast { bound } => value >= bound,
            Expect::True => value == 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    #[serde(with = "formats::extended_float")]
    pub value: f64,
    pub expect: Expect,
    pub passed: bool,
}

impl Check {
    pub fn new(name: &str, value: f64, expect: Expect) -> Self {
        Self {
            name: name.to_string(),
            value,
            expect,
            passed: expect.holds(value),
        }
    }

    fn near(name: &str, value: f64, target: f64, tolerance: f64) -> Self {
        Self::new(name, value, Expect::Near { target, tolerance })
    }

    fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Self::new(name, value, Expect::AtMost { bound })
    }

    fn at_least(name: &str, value: f64, bound: f64) -> Self {
        Self::new(name, value, Expect::AtLeast { bound })
    }

    fn truth(name: &str, holds: bool) -> Self {
        Self::new(name, if holds { 1.0 } else { 0.0 }, Expect::True)
    }
}

// ---------------------------------------------------------------- runs

/// Run-wide settings.
#[derive(Debug, Clone, Copy)]
pub struct Settings {
    /// Tolerance of the generic certificate checks.
    pub tol: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self { tol: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub enum Outcome {
    Action(Box<ActionRun>),
    Control(Box<ControlRun>),
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub name: &'static str,
    pub params: Resolved,
    pub checks: Vec<Check>,
    /// Named quantities reported without a pass/fail judgement.
    pub metrics: BTreeMap<&'static str, f64>,
    pub outcome: Outcome,
}

#[derive(Serialize)]
struct RunSummary<'a> {
    scenario: &'a str,
    passed: bool,
    params: BTreeMap<String, String>,
    checks: &'a [Check],
    metrics: BTreeMap<&'a str, ReportFloat>,
}

#[derive(Serialize)]
struct ReportFloat(#[serde(with = "formats::extended_float")] f64);

impl ScenarioRun {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn c0(&self) -> Option<f64> {
        match &self.outcome {
            Outcome::Action(run) => Some(run.c0()),
            Outcome::Control(run) => run.certificate.as_ref().map(|c| c.c0),
        }
    }

    pub fn momentum_lipschitz(&self) -> Option<f64> {
        match &self.outcome {
            Outcome::Action(run) if run.envelope.is_some() => Some(run.report.momentum_lipschitz_estimate),
            _ => None,
        }
    }

    pub fn hjb_residual(&self) -> Option<f64> {
        match &self.outcome {
            Outcome::Control(run) => Some(run.hjb_residual),
            Outcome::Action(_) => None,
        }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Writes `summary.json` and the pipeline files into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), FormatError> {
        match &self.outcome {
            Outcome::Action(run) => run.write(dir)?,
            Outcome::Control(run) => run.write(dir)?,
        }
        let summary = RunSummary {
            scenario: self.name,
            passed: self.passed(),
            params: self.params.rendered(),
            checks: &self.checks,
            metrics: self.metrics.iter().map(|(k, v)| (*k, ReportFloat(*v))).collect(),
        };
        formats::write_json(&dir.join("summary.json"), &summary)
    }

    /// Writes into `<outdir>/<scenario>/<run_id>/` and returns that directory.
    pub fn write(&self, outdir: &Path, run_id: &str) -> Result<PathBuf, FormatError> {
        let dir = outdir.join(self.name).join(run_id);
        self.write_to(&dir)?;
        Ok(dir)
    }
}

type RunFn = fn(&Resolved, &Settings) -> Result<ScenarioRun, ScenarioError>;

pub struct Scenario {
    pub name: &'static str,
    pub about: &'static str,
    pub params: &'static [ParamSpec],
    run: RunFn,
}

impl Scenario {
    pub fn resolve(&self, overrides: &Params) -> Result<Resolved, ConfigError> {
        let names: Vec<&str> = self.params.iter().map(|p| p.name).collect();
        overrides.check_known(&names)?;
        let mut out = BTreeMap::new();
        for spec in self.params {
            let value = match spec.kind {
                ParamKind::Count { default, lo, hi } => Value::Number(overrides.count(spec.name, default, lo, hi)? as f64),
                ParamKind::Real { default, lo, hi } => Value::Number(overrides.real(spec.name, default, lo, hi)?),
                ParamKind::Choice { default, choices } => Value::Text(overrides.choice(spec.name, default, choices)?),
            };
            out.insert(spec.name, value);
        }
        Ok(Resolved(out))
    }

    pub fn has_param(&self, name: &str) -> bool {
        self.params.iter().any(|p| p.name == name)
    }

    pub fn run(&self, overrides: &Params, settings: &Settings) -> Result<ScenarioRun, ScenarioError> {
        let params = self.resolve(overrides)?;
        (self.run)(&params, settings)
    }
}

pub fn registry() -> &'static [Scenario] {
    SCENARIOS
}

pub fn find(name: &str) -> Result<&'static Scenario, ScenarioError> {
    SCENARIOS.iter().find(|s| s.name == name).ok_or_else(|| ScenarioError::Unknown {
        name: name.to_string(),
        known: SCENARIOS.iter().map(|s| s.name).collect::<Vec<_>>().join(", "),
    })
}

/// Looks up `name` and runs it with `overrides` on top of the defaults.
pub fn run_scenario(name: &str, overrides: &Params, settings: &Settings) -> Result<ScenarioRun, ScenarioError> {
    find(name)?.run(overrides, settings)
}

static SCENARIOS: &[Scenario] = &[
    Scenario {
        name: "exact_form",
        about: "L = df for a smooth f: every closed measure is minimizing and c0 = 0",
        params: &[
            count("n", 16, 3, 512, "nodes per dimension"),
            count("dim", 1, 1, 2, "torus dimension"),
            count("K", 1, 1, 4, "stencil radius"),
            choice("f", "sin", &["sin", "cos"], "f(x) = sum of sin(2 pi x_i) or cos(2 pi x_i)"),
        ],
        run: exact_form,
    },
    Scenario {
        name: "free_particle",
        about: "L = |v|^2/2: rest is optimal, c0 = 0, f = 0",
        params: &[
            count("n", 16, 3, 512, "nodes per dimension"),
            count("dim", 1, 1, 2, "torus dimension"),
            count("K", 1, 1, 4, "stencil radius"),
        ],
        run: free_particle,
    },
    Scenario {
        name: "tonelli_pendulum",
        about: "L = v^2/2 + a V(x): the minimizer rests at the bottom of the potential, c0 = -a",
        params: &[
            count("n", 32, 4, 1024, "nodes"),
            count("K", 1, 1, 4, "stencil radius"),
            choice("V", "cos", &["cos", "sin"], "V(x) = cos(2 pi x) or sin(2 pi x)"),
            real("a", 1.0, 1e-3, 1e3, "potential amplitude"),
        ],
        run: tonelli_pendulum,
    },
    Scenario {
        name: "rotation",
        about: "L = (v - v0)^2/2 + b v sin(2 pi x): uniform rotation at speed v0, momentum b sin(2 pi x)",
        params: &[
            count("n", 16, 3, 1024, "nodes"),
            count("K", 2, 2, 4, "stencil radius"),
            real("v0", 1.0, -3.0, 3.0, "rotation speed, an integer below K in absolute value"),
            real("b", 0.0, -0.1, 0.1, "amplitude of the added term b v sin(2 pi x)"),
        ],
        run: rotation,
    },
    Scenario {
        name: "double_well",
        about: "L = (v^2 - 1)^2: nonconvex fibers, flat convex envelope on [-1, 1]",
        params: &[
            count("n", 16, 3, 512, "nodes"),
            count("K", 2, 2, 4, "stencil radius"),
        ],
        run: double_well,
    },
    Scenario {
        name: "finsler_distance",
        about: "L = |v| with boundary delta_dst - delta_src: value and potential are distances",
        params: &[
            count("n", 16, 3, 256, "nodes per dimension"),
            count("dim", 1, 1, 2, "torus dimension"),
            count("K", 1, 1, 3, "stencil radius"),
            count("src", 0, 0, 65535, "source node index"),
            count("dst", 8, 0, 65535, "target node index"),
        ],
        run: finsler_distance,
    },
    Scenario {
        name: "dirac_boundary",
        about: "single-atom minimizer at (0, 0) of L = dF + kappa (1 - cos 2 pi x), F = |cos pi x|/pi",
        params: &[
            count("n", 32, 4, 1024, "nodes"),
            count("K", 1, 1, 4, "stencil radius"),
            real("kappa", 0.01, 1e-6, 1.0, "slack added to the exact form dF"),
        ],
        run: dirac_boundary,
    },
    Scenario {
        name: "legendre_control",
        about: "minimize the integral of x + a^2/2 with x' = a in {-1, 0, 1}, x(0) = x0, on [0, t0]",
        params: &[
            count("n", 16, 2, 512, "cells per unit length and steps per unit time"),
            real("half_width", 3.0, 0.5, 100.0, "state box is [-half_width, half_width]"),
            real("t0", 1.0, 0.0625, 16.0, "horizon"),
            real("x0", 0.0, -100.0, 100.0, "initial state"),
        ],
        run: legendre_control,
    },
];

// ---------------------------------------------------------------- helpers

fn torus(params: &Resolved, dim: usize) -> Result<PhaseGrid, ScenarioError> {
    let n = params.count("n");
    let k = params.count("K");
    if 2 * k >= n {
        return Err(invalid("K", format!("stencil radius {k} needs n > {}", 2 * k)));
    }
    Ok(build_torus_grid(dim, n, k, 1.0 / n as f64)?)
}

fn action_run(
    name: &'static str,
    params: &Resolved,
    settings: &Settings,
    table: &LagrangianTable,
    current: Option<&BoundaryCurrent>,
) -> Result<(ScenarioRun, Box<ActionRun>), ScenarioError> {
    let run = Box::new(run_action(table, current)?);
    let tol = settings.tol;
    let r = &run.report;
    let checks = vec![
        Check::at_most("duality_gap", r.duality_gap, tol),
        Check::at_least("slack_min", r.slack_min, -tol),
        Check::at_most("slack_on_support_max", r.slack_on_support_max, tol),
        Check::at_most("hamiltonian_residual_max", r.hamiltonian_residual_max, tol),
        Check::at_most("boundary_residual_max", r.boundary_residual_max, tol),
    ];
    let mut metrics = BTreeMap::new();
    metrics.insert("c0", run.c0());
    metrics.insert("value", run.solution.value);
    metrics.insert("mass", run.solution.measure.mass());
    metrics.insert("support_edges", run.solution.measure.support_len() as f64);
    metrics.insert("momentum_lipschitz_estimate", r.momentum_lipschitz_estimate);
    let scenario = ScenarioRun {
        name,
        params: params.clone(),
        checks,
        metrics,
        outcome: Outcome::Action(run.clone()),
    };
    Ok((scenario, run))
}

fn torus_velocity(grid: &PhaseGrid, e: usize) -> [f64; 2] {
    grid.velocity(e).expect("torus edge")
}

/// Shortest path distances from `src` with edge weights `w ≥ 0`.
pub fn dijkstra(grid: &PhaseGrid, w: &[f64], src: usize) -> Vec<f64> {
    #[derive(PartialEq)]
    struct Item(f64, usize);
    impl Eq for Item {}
    impl PartialOrd for Item {
        fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Item {
        fn cmp(&self, other: &Self) -> Ordering {
            self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
        }
    }
    let mut dist = vec![f64::INFINITY; grid.node_count()];
    dist[src] = 0.0;
    let mut heap = BinaryHeap::from([Reverse(Item(0.0, src))]);
    while let Some(Reverse(Item(d, x))) = heap.pop() {
        if d > dist[x] {
            continue;
        }
        for &e in grid.out_edges(x) {
            let y = grid.head(e);
            let nd = d + w[e];
            if nd < dist[y] {
                dist[y] = nd;
                heap.push(Reverse(Item(nd, y)));
            }
        }
    }
    dist
}

fn spread(values: impl IntoIterator<Item = f64>) -> f64 {
    let (lo, hi) = values
        .into_iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    if lo > hi {
        0.0
    } else {
        hi - lo
    }
}

// ---------------------------------------------------------------- action scenarios

fn exact_form(params: &Resolved, settings: &Settings) -> Result<ScenarioRun, ScenarioError> {
    let dim = params.count("dim");
    let grid = torus(params, dim)?;
    let t = grid.require_torus()?;
    let shape: fn(f64) -> f64 = match params.text("f") {
        "sin" => |x| (2.0 * PI * x).sin(),
        _ => |x| (2.0 * PI * x).cos(),
    };
    let f: Vec<f64> = (0..grid.node_count())
        .map(|x| grid.position(x).unwrap()[..dim].iter().map(|&c| shape(c)).sum())
        .collect();
    let table = LagrangianTable::from_values(&grid, discrete_differential(&f, &grid))?;
    let (mut run, action) = action_run("exact_form", params, settings, &table, None)?;

    // any other closed measure: one lap at unit speed along the first axis
    let mut unit = [0i32; 2];
    unit[0] = 1;
    let s = t.stencil().iter().position(|k| *k == unit).expect("unit offset in stencil");
    let mut x = 0;
    let mut lap = 0.0;
    for _ in 0..t.nodes_per_dim() {
        let e = grid.edge_at(x, s).unwrap();
        lap += table.value(e);
        x = grid.head(e);
    }
    let lap_mean = lap / t.nodes_per_dim() as f64;
    run.checks.push(Check::near("c0", action.c0(), 0.0, 1e-9));
    run.checks.push(Check::at_least("g_min", action.certificate.slack_min(), -1e-9));
    run.checks.push(Check::near("unit_speed_lap_action", lap_mean, 0.0, 1e-9));
    Ok(run)
}

fn free_particle(params: &Resolved, settings: &Settings) -> Result<ScenarioRun, ScenarioError> {
    let dim = params.count("dim");
    let grid = torus(params, dim)?;
    let rest = grid.edge_at(0, grid.require_torus()?.rest_index()).unwrap();
    let table = sample_lagrangian(&grid, |_, v| v.iter().map(|c| c * c).sum::<f64>() / 2.0)?;
    let (mut run, action) = action_run("free_particle", params, settings, &table, None)?;
    let mu = &action.solution.measure;
    let at_rest = mu.support_len() == 1 && mu.weight(rest) > 0.0;
    let f_max = action.certificate.potential.iter().fold(0.0f64, |m, f| m.max(f.abs()));
    run.checks.push(Check::near("c0", action.c0(), 0.0, 1e-12));
    run.checks.push(Check::truth("rest_at_origin", at_rest));
    run.checks.push(Check::at_most("potential_max_abs", f_max, 1e-12));
    Ok(run)
}

fn tonelli_pendulum(params: &Resolved, settings: &Settings) -> Result<ScenarioRun, ScenarioError> {
    let grid = torus(params, 1)?;
    let n = params.count("n");
    let a = params.real("a");
    let potential: fn(f64) -> f64 = match params.text("V") {
        "cos" => |x| (2.0 * PI * x).cos(),
        _ => |x| (2.0 * PI * x).sin(),
    };
    let table = sample_lagrangian(&grid, |x, v| v[0] * v[0] / 2.0 + a * potential(x[0]))?;
    let (mut run, action) = action_run("tonelli_pendulum", params, settings, &table, None)?;

    let v_nodes: Vec<f64> = (0..n).map(|x| a * potential(grid.position(x).unwrap()[0])).collect();
    let v_min = v_nodes.iter().cloned().fold(f64::INFINITY, f64::min);
    let dx = 1.0 / n as f64;
    let mu = &action.solution.measure;
    let concentrated = mu
        .support()
        .all(|(e, _)| torus_velocity(&grid, e)[0] == 0.0 && v_nodes[grid.tail(e)] <= v_min + 1e-12);
    run.checks.push(Check::near("c0", action.c0(), -a, a * dx * dx));
    run.checks.push(Check::truth("support_at_potential_minimum_at_rest", concentrated));
    Ok(run)
}

fn rotation(params: &Resolved, settings: &Settings) -> Result<ScenarioRun, ScenarioError> {
    let grid = torus(params, 1)?;
    let k = params.count("K");
    let v0 = params.real("v0");
    if v0.fract() != 0.0 || v0.abs() >= k as f64 {
        return Err(invalid("v0", format!("{v0} must be an integer with |v0| < K = {k}")));
    }
    let b = params.real("b");
    let table = sample_lagrangian(&grid, |x, v| {
        (v[0] - v0) * (v[0] - v0) / 2.0 + b * v[0] * (2.0 * PI * x[0]).sin()
    })?;
    let (mut run, action) = action_run("rotation", params, settings, &table, None)?;
    let mu = &action.solution.measure;
    let at_v0 = mu.support().all(|(e, _)| torus_velocity(&grid, e)[0] == v0);
    // the fiber derivative at v0 is b sin(2 pi x)
    let momenta = action.momenta.as_ref().expect("torus run");
    let p_err = momenta
        .nodes()
        .flat_map(|(x, m)| {
            let expected = b * (2.0 * PI * grid.position(x).unwrap()[0]).sin();
            m.momenta.iter().map(move |(_, d)| (d.covector[0] - expected).abs())
        })
        .fold(0.0f64, f64::max);
    run.checks.push(Check::near("c0", action.c0(), 0.0, 1e-12));
    run.checks.push(Check::truth("support_velocity_is_v0", at_v0));
    run.checks.push(Check::at_most("momentum_error", p_err, 1e-12));
    Ok(run)
}

fn double_well(params: &Resolved, settings: &Settings) -> Result<ScenarioRun, ScenarioError> {
    let grid = torus(params, 1)?;
    let t = grid.require_torus()?;
    let table = sample_lagrangian(&grid, |_, v| (v[0] * v[0] - 1.0).powi(2))?;
    let (mut run, action) = action_run("double_well", params, settings, &table, None)?;
    let env = action.envelope.as_ref().expect("torus run");

    // the flat section is the envelope on |v| ≤ 1
    let flat = (0..grid.edge_count())
        .filter(|&e| torus_velocity(&grid, e)[0].abs() <= 1.0)
        .map(|e| env.values()[e].abs())
        .fold(0.0f64, f64::max);
    let rest_value = (0..grid.node_count())
        .map(|x| env.values()[grid.edge_at(x, t.rest_index()).unwrap()].abs())
        .fold(0.0f64, f64::max);
    let below = env.values().iter().zip(table.values()).all(|(lt, l)| lt <= l);
    let again = fiber_convex_envelope(&env.as_table()).map_err(PipelineError::from)?;
    let idempotence = again
        .values()
        .iter()
        .zip(env.values())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    run.checks.push(Check::near("c0", action.c0(), 0.0, 1e-12));
    run.checks.push(Check::near("flat_section_value", rest_value, 0.0, 0.0));
    run.checks.push(Check::near("flat_section_max_abs", flat, 0.0, 0.0));
    run.checks.push(Check::truth("envelope_below_lagrangian", below));
    run.checks.push(Check::at_most("envelope_idempotence", idempotence, 1e-12));
    Ok(run)
}

fn finsler_distance(params: &Resolved, settings: &Settings) -> Result<ScenarioRun, ScenarioError> {
    let dim = params.count("dim");
    let grid = torus(params, dim)?;
    let (src, dst) = (params.count("src"), params.count("dst"));
    for (key, x) in [("src", src), ("dst", dst)] {
        if x >= grid.node_count() {
            return Err(invalid(key, format!("node {x} outside 0..{}", grid.node_count())));
        }
    }
    if src == dst {
        return Err(invalid("dst", "must differ from src"));
    }
    let table = sample_lagrangian(&grid, |_, v| v.iter().map(|c| c * c).sum::<f64>().sqrt())?;
    let current = BoundaryCurrent::point_pair(&grid, src, dst)?;
    let (mut run, action) = action_run("finsler_distance", params, settings, &table, Some(&current))?;

    let dist = dijkstra(&grid, table.values(), src);
    let h = grid.time_step();
    let f = &action.certificate.potential;
    let offset_spread = spread(f.iter().zip(&dist).map(|(fx, d)| fx - h * d));
    run.checks.push(Check::near("value", action.solution.value, dist[dst], 1e-9));
    run.checks.push(Check::at_most("potential_minus_distance_spread", offset_spread, 1e-9));
    run.metrics.insert("dijkstra_distance", dist[dst]);
    run.metrics.insert("distance_profile_max", h * dist.iter().cloned().fold(0.0, f64::max));
    Ok(run)
}

fn dirac_boundary(params: &Resolved, settings: &Settings) -> Result<ScenarioRun, ScenarioError> {
    let grid = torus(params, 1)?;
    let t = grid.require_torus()?;
    let n = params.count("n");
    let kappa = params.real("kappa");
    let dx = 1.0 / n as f64;
    let reference: Vec<f64> = (0..n).map(|x| (PI * x as f64 * dx).cos().abs() / PI).collect();
    let d_ref = discrete_differential(&reference, &grid);
    let values: Vec<f64> = (0..grid.edge_count())
        .map(|e| {
            let x = grid.position(grid.tail(e)).unwrap()[0];
            d_ref[e] + kappa * (1.0 - (2.0 * PI * x).cos())
        })
        .collect();
    let table = LagrangianTable::from_values(&grid, values)?;
    let (mut run, action) = action_run("dirac_boundary", params, settings, &table, None)?;

    let rest0 = grid.edge_at(0, t.rest_index()).unwrap();
    let mu = &action.solution.measure;
    let single_atom = mu.support_len() == 1 && mu.weight(rest0) > 0.0;
    let f = &action.certificate.potential;
    // jump of the one-sided difference quotients of f at node x
    let jump = |x: usize| {
        let l = f[(x + n - 1) % n];
        let r = f[(x + 1) % n];
        ((r - f[x]) - (f[x] - l)).abs() / dx
    };
    let half = (n / 2 - 1..=n / 2 + 1).map(jump).fold(0.0f64, f64::max);
    let slack_off = (0..grid.edge_count())
        .filter(|&e| grid.tail(e) != 0)
        .map(|e| action.certificate.slack[e])
        .fold(f64::INFINITY, f64::min);
    let deviation = spread(f.iter().zip(&reference).map(|(a, b)| a - b));

    run.checks.push(Check::near("c0", action.c0(), 0.0, 1e-12));
    run.checks.push(Check::truth("single_atom_at_origin", single_atom));
    run.checks.push(Check::at_most("slack_on_atom", action.certificate.slack[rest0].abs(), 1e-12));
    // any subsolution is within the integrated slack of the reference potential
    run.checks.push(Check::at_most("potential_minus_reference_spread", deviation, kappa));
    run.checks.push(Check::at_least("potential_derivative_jump_near_half", half, 1.0));
    run.metrics.insert("potential_derivative_jump_at_origin", jump(0));
    run.metrics.insert("slack_min_off_support", slack_off);
    Ok(run)
}

// ---------------------------------------------------------------- control scenarios

/// The legendre_control problem at resolution `n`.
pub fn legendre_problem(n: usize, half_width: f64, t0: f64, x0: f64) -> Result<ControlProblem, ScenarioError> {
    let dx = 1.0 / n as f64;
    let cells = half_width * n as f64;
    let steps = t0 * n as f64;
    let start = (x0 + half_width) * n as f64;
    for (key, q) in [("half_width", cells), ("t0", steps), ("x0", start)] {
        if (q - q.round()).abs() > 1e-9 {
            return Err(invalid(key, format!("must be a multiple of 1/n = {dx}")));
        }
    }
    let count = 2 * cells.round() as usize + 1;
    let start = start.round();
    if start < 0.0 || start as usize >= count {
        return Err(invalid("x0", "outside the state box"));
    }
    let states = StateGrid::line(count, -half_width, dx)?;
    let speeds = [-1.0, 0.0, 1.0];
    Ok(ControlProblem::from_fns(
        states,
        steps.round() as usize,
        dx,
        vec!["left".into(), "stay".into(), "right".into()],
        move |_, a| [speeds[a], 0.0],
        move |x, _, a| x[0] + speeds[a] * speeds[a] / 2.0,
        InitialCondition::point(count, start as usize),
    )?)
}

/// DP/LP agreement, Maximum Principle and u/v relation checks of a control run.
pub fn control_checks(run: &ControlRun) -> Vec<Check> {
    let mut checks = vec![Check::near("dp_equals_lp", run.relaxed.value, run.dp_value, 1e-9)];
    match (run.maximum_principle, run.u_v_residual) {
        (Some((on, off)), Some(uv)) => {
            checks.push(Check::at_most("max_principle_support_violation", on, 1e-8));
            checks.push(Check::at_least("max_principle_off_support_slack", off, -1e-9));
            checks.push(Check::at_most("u_v_relation_residual", uv, 1e-8));
        }
        _ => checks.push(Check::truth("certificate_exists", false)),
    }
    checks
}

fn legendre_control(params: &Resolved, _settings: &Settings) -> Result<ScenarioRun, ScenarioError> {
    let n = params.count("n");
    let (w, t0, x0) = (params.real("half_width"), params.real("t0"), params.real("x0"));
    let p = legendre_problem(n, w, t0, x0)?;
    let run = Box::new(run_control(&p)?);
    run.warn_box_contact();
    let refined = run_control(&legendre_problem(2 * n, w, t0, x0)?)?;
    let ratio = run.hjb_residual / refined.hjb_residual;

    let mut checks = control_checks(&run);
    checks.push(Check::at_least("hjb_refinement_ratio", ratio, 1.5));
    let mut metrics = BTreeMap::new();
    metrics.insert("value", run.dp_value);
    metrics.insert("hjb_residual", run.hjb_residual);
    metrics.insert("hjb_residual_refined", refined.hjb_residual);
    metrics.insert("box_contact_states", run.relaxed.boundary_contact.len() as f64);
    Ok(ScenarioRun {
        name: "legendre_control",
        params: params.clone(),
        checks,
        metrics,
        outcome: Outcome::Control(run),
    })
}
