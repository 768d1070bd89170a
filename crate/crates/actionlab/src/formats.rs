//! JSON and CSV readers and writers for problems, solutions and reports.
//!
//! Torus nodes are written as lattice coordinates (`node_index` in one dimension,
//! `node_index_0, node_index_1` in two), stencil offsets likewise. Floats use
//! Rust's shortest round-trip formatting, so output is byte-stable.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use actionlab_core::control::ControlArc;
use actionlab_core::grid::Torus;
use actionlab_core::{
    build_torus_grid, BoundaryCurrent, ControlCertificate, ControlError, ControlProblem, DiagnosticsReport,
    DiscreteMeasure, DualCertificate, FiberEnvelope, GridError, InitialCondition, LagrangianTable,
    OptimalSolution, PhaseGrid, StateGrid, Status, ValueFunction,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("expected columns [{expected}], found [{got}]")]
    Header { expected: String, got: String },
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("field `{field}`: {message}")]
    Field { field: &'static str, message: String },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Control(#[from] ControlError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn open(path: &Path) -> Result<BufReader<File>, FormatError> {
    File::open(path).map(BufReader::new).map_err(io_err(path))
}

pub fn create(path: &Path) -> Result<BufWriter<File>, FormatError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

/// Pretty JSON followed by a newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, FormatError> {
    Ok(serde_json::from_reader(open(path)?)?)
}

/// Non-finite floats as the strings `"inf"`, `"-inf"`, `"nan"`; JSON has no literal for them.
pub mod extended_float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if x.is_nan() {
            s.serialize_str("nan")
        } else if *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(x) => Ok(x),
            Repr::Text(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                _ => Err(serde::de::Error::custom(format!("not a number: {s}"))),
            },
        }
    }
}

// ---------------------------------------------------------------- phase grids

/// Torus description `{dim, n, stencil_radius, h}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub n: usize,
    pub stencil_radius: usize,
    pub h: f64,
}

impl GridSpec {
    pub fn of(grid: &PhaseGrid) -> Result<Self, FormatError> {
        let t = grid.require_torus()?;
        Ok(Self {
            dim: t.dim(),
            n: t.nodes_per_dim(),
            stencil_radius: t.stencil_radius(),
            h: grid.time_step(),
        })
    }

    pub fn build(&self) -> Result<PhaseGrid, FormatError> {
        Ok(build_torus_grid(self.dim, self.n, self.stencil_radius, self.h)?)
    }
}

fn indexed(prefix: &str, d: usize) -> Vec<String> {
    if d == 1 {
        vec![prefix.to_string()]
    } else {
        (0..d).map(|i| format!("{prefix}_{i}")).collect()
    }
}

fn edge_header(t: &Torus, tail: &[&str]) -> Vec<String> {
    let mut h = indexed("node_index", t.dim());
    h.extend(indexed("offset", t.dim()));
    h.extend(tail.iter().map(|s| s.to_string()));
    h
}

fn node_header(t: &Torus, tail: &[&str]) -> Vec<String> {
    let mut h = indexed("node_index", t.dim());
    h.extend(tail.iter().map(|s| s.to_string()));
    h
}

fn edge_key(grid: &PhaseGrid, t: &Torus, e: usize) -> Vec<String> {
    let c = t.node_coords(grid.tail(e));
    let k = grid.offset(e).expect("torus edge");
    let d = t.dim();
    c[..d]
        .iter()
        .map(|x| x.to_string())
        .chain(k[..d].iter().map(|x| x.to_string()))
        .collect()
}

fn node_key(t: &Torus, x: usize) -> Vec<String> {
    t.node_coords(x)[..t.dim()].iter().map(|c| c.to_string()).collect()
}

/// Writes a header and rows of already formatted cells.
fn write_table<W: Write>(w: W, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), FormatError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    for row in rows {
        out.write_record(&row)?;
    }
    out.flush().map_err(|e| FormatError::Csv(e.into()))?;
    Ok(())
}

/// Reads all rows after checking the header exactly.
fn read_table<R: Read>(r: R, header: &[String]) -> Result<Vec<csv::StringRecord>, FormatError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let got: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if got != header {
        return Err(FormatError::Header {
            expected: header.join(","),
            got: got.join(","),
        });
    }
    rdr.records().map(|r| r.map_err(FormatError::from)).collect()
}

fn cell<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, row: usize) -> Result<T, FormatError> {
    let s = rec.get(i).unwrap_or("");
    s.parse().map_err(|_| FormatError::Row {
        row,
        message: format!("cannot parse `{s}` in column {}", i + 1),
    })
}

fn parse_node(t: &Torus, rec: &csv::StringRecord, row: usize) -> Result<usize, FormatError> {
    let mut c = [0usize; 2];
    for (i, slot) in c.iter_mut().enumerate().take(t.dim()) {
        *slot = cell(rec, i, row)?;
        if *slot >= t.nodes_per_dim() {
            return Err(FormatError::Row {
                row,
                message: format!("node coordinate {slot} outside 0..{}", t.nodes_per_dim()),
            });
        }
    }
    Ok(t.node_index(c))
}

fn parse_edge(grid: &PhaseGrid, t: &Torus, rec: &csv::StringRecord, row: usize) -> Result<usize, FormatError> {
    let x = parse_node(t, rec, row)?;
    let d = t.dim();
    let mut k = [0i32; 2];
    for (i, slot) in k.iter_mut().take(d).enumerate() {
        *slot = cell(rec, d + i, row)?;
    }
    let s = t.stencil().iter().position(|o| *o == k).ok_or_else(|| FormatError::Row {
        row,
        message: format!("offset {:?} is not in the stencil", &k[..d]),
    })?;
    Ok(grid.edge_at(x, s).expect("stencil index in range"))
}

/// Measure CSV `(node_index…, offset…, weight)`, support edges only.
pub fn write_measure_csv<W: Write>(w: W, mu: &DiscreteMeasure) -> Result<(), FormatError> {
    let grid = mu.grid();
    let t = grid.require_torus()?;
    let rows = mu.support().map(|(e, wt)| {
        let mut r = edge_key(grid, t, e);
        r.push(wt.to_string());
        r
    });
    write_table(w, &edge_header(t, &["weight"]), rows)
}

pub fn read_measure_csv<R: Read>(r: R, grid: &PhaseGrid) -> Result<DiscreteMeasure, FormatError> {
    let t = grid.require_torus()?;
    let recs = read_table(r, &edge_header(t, &["weight"]))?;
    let mut mu = DiscreteMeasure::zero(grid);
    for (i, rec) in recs.iter().enumerate() {
        let e = parse_edge(grid, t, rec, i + 1)?;
        let w: f64 = cell(rec, 2 * t.dim(), i + 1)?;
        mu.add(e, w).map_err(|err| FormatError::Row {
            row: i + 1,
            message: err.to_string(),
        })?;
    }
    Ok(mu)
}

/// Current CSV `(node_index…, charge)`, charged nodes only.
pub fn write_current_csv<W: Write>(w: W, c: &BoundaryCurrent) -> Result<(), FormatError> {
    let t = c.grid().require_torus()?;
    let rows = c.support().into_iter().map(|x| {
        let mut r = node_key(t, x);
        r.push(c.charge(x).to_string());
        r
    });
    write_table(w, &node_header(t, &["charge"]), rows)
}

pub fn read_current_csv<R: Read>(r: R, grid: &PhaseGrid) -> Result<BoundaryCurrent, FormatError> {
    let t = grid.require_torus()?;
    let recs = read_table(r, &node_header(t, &["charge"]))?;
    let mut charges = vec![0.0; grid.node_count()];
    for (i, rec) in recs.iter().enumerate() {
        let x = parse_node(t, rec, i + 1)?;
        let q: f64 = cell(rec, t.dim(), i + 1)?;
        charges[x] += q;
    }
    Ok(BoundaryCurrent::new(grid, charges)?)
}

/// Lagrangian CSV `(node_index…, offset…, value)`, one row per edge.
pub fn write_lagrangian_csv<W: Write>(w: W, table: &LagrangianTable) -> Result<(), FormatError> {
    let grid = table.grid();
    let t = grid.require_torus()?;
    let rows = (0..grid.edge_count()).map(|e| {
        let mut r = edge_key(grid, t, e);
        r.push(table.value(e).to_string());
        r
    });
    write_table(w, &edge_header(t, &["value"]), rows)
}

/// Every edge must appear exactly once.
pub fn read_lagrangian_csv<R: Read>(r: R, grid: &PhaseGrid) -> Result<LagrangianTable, FormatError> {
    let t = grid.require_torus()?;
    let recs = read_table(r, &edge_header(t, &["value"]))?;
    let mut values = vec![f64::NAN; grid.edge_count()];
    let mut seen = vec![false; grid.edge_count()];
    for (i, rec) in recs.iter().enumerate() {
        let e = parse_edge(grid, t, rec, i + 1)?;
        if seen[e] {
            return Err(FormatError::Row {
                row: i + 1,
                message: "edge listed twice".to_string(),
            });
        }
        seen[e] = true;
        values[e] = cell(rec, 2 * t.dim(), i + 1)?;
    }
    if let Some(e) = seen.iter().position(|s| !s) {
        return Err(FormatError::Field {
            field: "value",
            message: format!(
                "no value for node {:?}, offset {:?}",
                &t.node_coords(grid.tail(e))[..t.dim()],
                &grid.offset(e).unwrap()[..t.dim()]
            ),
        });
    }
    Ok(LagrangianTable::from_values(grid, values)?)
}

// ---------------------------------------------------------------- solutions

/// `{value, status, mass}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionSummary {
    #[serde(with = "extended_float")]
    pub value: f64,
    pub status: String,
    pub mass: f64,
}

impl SolutionSummary {
    pub fn of(sol: &OptimalSolution) -> Self {
        Self {
            value: sol.value,
            status: sol.status.as_str().to_string(),
            mass: sol.measure.mass(),
        }
    }

    pub fn status(&self) -> Result<Status, FormatError> {
        match self.status.as_str() {
            "OPTIMAL" => Ok(Status::Optimal),
            "UNBOUNDED" => Ok(Status::Unbounded),
            "INFEASIBLE" => Ok(Status::Infeasible),
            other => Err(FormatError::Field {
                field: "status",
                message: format!("unknown status `{other}`"),
            }),
        }
    }
}

/// `{c0, normalization_node, f, max_negative_slack, slack_on_support}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub c0: f64,
    pub normalization_node: usize,
    pub f: Vec<f64>,
    pub max_negative_slack: f64,
    pub slack_on_support: f64,
}

impl CertificateSummary {
    pub fn of(cert: &DualCertificate, mu: &DiscreteMeasure) -> Self {
        Self {
            c0: cert.critical_constant,
            normalization_node: cert.normalization_node,
            f: cert.potential.clone(),
            max_negative_slack: cert.max_negative_slack(),
            slack_on_support: cert.slack_on_support(mu),
        }
    }
}

/// Slack CSV `(node_index…, offset…, L, df, slack, weight)`.
pub fn write_slack_csv<W: Write>(
    w: W,
    table: &LagrangianTable,
    cert: &DualCertificate,
    mu: &DiscreteMeasure,
) -> Result<(), FormatError> {
    let grid = table.grid();
    let t = grid.require_torus()?;
    let df = cert.differential(table);
    let rows = (0..grid.edge_count()).map(|e| {
        let mut r = edge_key(grid, t, e);
        r.extend([
            table.value(e).to_string(),
            df[e].to_string(),
            cert.slack[e].to_string(),
            mu.weight(e).to_string(),
        ]);
        r
    });
    write_table(w, &edge_header(t, &["L", "df", "slack", "weight"]), rows)
}

/// Envelope CSV `(node, offset…, L, L_tilde, p_minus…, p_plus…)`.
pub fn write_envelope_csv<W: Write>(w: W, env: &FiberEnvelope) -> Result<(), FormatError> {
    let grid = env.grid();
    let t = grid.require_torus()?;
    let d = t.dim();
    let mut header = vec!["node".to_string()];
    header.extend(indexed("offset", d));
    header.extend(["L".to_string(), "L_tilde".to_string()]);
    header.extend(indexed("p_minus", d));
    header.extend(indexed("p_plus", d));
    let rows = (0..grid.edge_count()).map(|e| {
        let k = grid.offset(e).unwrap();
        let mut r = vec![grid.tail(e).to_string()];
        r.extend(k[..d].iter().map(|c| c.to_string()));
        r.push(env.lagrangian()[e].to_string());
        r.push(env.values()[e].to_string());
        r.extend(env.p_minus(e)[..d].iter().map(|p| p.to_string()));
        r.extend(env.p_plus(e)[..d].iter().map(|p| p.to_string()));
        r
    });
    write_table(w, &header, rows)
}

/// Per-node CSV `(node, f, momentum…, H_residual)`; momentum is empty off the support.
pub fn write_nodes_csv<W: Write>(w: W, report: &DiagnosticsReport, dim: usize) -> Result<(), FormatError> {
    let mut header = vec!["node".to_string(), "f".to_string()];
    header.extend(indexed("momentum", dim));
    header.push("H_residual".to_string());
    let rows = report.nodes.iter().map(|row| {
        let mut r = vec![row.node.to_string(), row.potential.to_string()];
        match row.momentum {
            Some(p) => r.extend(p[..dim].iter().map(|c| c.to_string())),
            None => r.extend(std::iter::repeat_n(String::new(), dim)),
        }
        r.push(row.hamiltonian_excess.to_string());
        r
    });
    write_table(w, &header, rows)
}

/// Scalar part of a [`DiagnosticsReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSummary {
    pub hamiltonian_residual_max: f64,
    pub slack_min: f64,
    pub slack_on_support_max: f64,
    pub duality_gap: f64,
    pub momentum_lipschitz_estimate: f64,
    pub boundary_residual_max: f64,
    pub complementary_slackness: f64,
    pub mass: f64,
    pub excluded_nodes: Vec<usize>,
}

impl From<&DiagnosticsReport> for DiagnosticsSummary {
    fn from(r: &DiagnosticsReport) -> Self {
        Self {
            hamiltonian_residual_max: r.hamiltonian_residual_max,
            slack_min: r.slack_min,
            slack_on_support_max: r.slack_on_support_max,
            duality_gap: r.duality_gap,
            momentum_lipschitz_estimate: r.momentum_lipschitz_estimate,
            boundary_residual_max: r.boundary_residual_max,
            complementary_slackness: r.complementary_slackness,
            mass: r.mass,
            excluded_nodes: r.excluded_nodes.clone(),
        }
    }
}

// ---------------------------------------------------------------- control problems

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateGridSpec {
    pub dim: usize,
    pub counts: Vec<usize>,
    pub origin: Vec<f64>,
    pub spacing: f64,
}

impl StateGridSpec {
    pub fn of(g: &StateGrid) -> Self {
        let d = g.dim();
        Self {
            dim: d,
            counts: g.counts()[..d].to_vec(),
            origin: g.origin()[..d].to_vec(),
            spacing: g.spacing(),
        }
    }

    pub fn build(&self) -> Result<StateGrid, FormatError> {
        let d = self.dim;
        if self.counts.len() != d || self.origin.len() != d {
            return Err(FormatError::Field {
                field: "grid",
                message: format!("counts and origin need {d} entries"),
            });
        }
        let mut counts = [1usize; 2];
        let mut origin = [0.0; 2];
        counts[..d].copy_from_slice(&self.counts);
        origin[..d].copy_from_slice(&self.origin);
        Ok(StateGrid::new(d, counts, origin, self.spacing)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InitialSpec {
    /// Any probability distribution at time 0.
    Free,
    /// Unit mass at one state, given by coordinates.
    Point { state: Vec<usize> },
    /// One weight per state.
    Weights { weights: Vec<f64> },
}

/// Control problem header `{grid, controls, t0, dt, initial}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSpec {
    pub grid: StateGridSpec,
    pub controls: Vec<String>,
    pub t0: f64,
    pub dt: f64,
    pub initial: InitialSpec,
}

impl ControlSpec {
    pub fn of(p: &ControlProblem) -> Self {
        let initial = match p.initial() {
            InitialCondition::Free => InitialSpec::Free,
            InitialCondition::Fixed(w) => InitialSpec::Weights { weights: w.clone() },
        };
        Self {
            grid: StateGridSpec::of(p.states()),
            controls: p.controls().to_vec(),
            t0: p.horizon(),
            dt: p.dt(),
            initial,
        }
    }

    pub fn steps(&self) -> Result<usize, FormatError> {
        let ratio = self.t0 / self.dt;
        let steps = ratio.round();
        if !(self.t0 > 0.0 && self.dt > 0.0) || steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(FormatError::Field {
                field: "t0",
                message: format!("t0 = {} is not a positive multiple of dt = {}", self.t0, self.dt),
            });
        }
        Ok(steps as usize)
    }

    fn initial_condition(&self, states: &StateGrid) -> Result<InitialCondition, FormatError> {
        Ok(match &self.initial {
            InitialSpec::Free => InitialCondition::Free,
            InitialSpec::Weights { weights } => InitialCondition::Fixed(weights.clone()),
            InitialSpec::Point { state } => {
                let d = states.dim();
                let counts = states.counts();
                if state.len() != d || (0..d).any(|i| state[i] >= counts[i]) {
                    return Err(FormatError::Field {
                        field: "initial",
                        message: format!("point {state:?} is not a state"),
                    });
                }
                let mut c = [0usize; 2];
                c[..d].copy_from_slice(state);
                InitialCondition::point(states.len(), states.index(c))
            }
        })
    }
}

fn state_header(d: usize, tail: &[&str]) -> Vec<String> {
    let mut h = indexed("state_index", d);
    h.extend(tail.iter().map(|s| s.to_string()));
    h
}

fn state_key(g: &StateGrid, x: usize) -> Vec<String> {
    g.coords(x)[..g.dim()].iter().map(|c| c.to_string()).collect()
}

fn parse_state(g: &StateGrid, rec: &csv::StringRecord, row: usize) -> Result<usize, FormatError> {
    let counts = g.counts();
    let mut c = [0usize; 2];
    for i in 0..g.dim() {
        c[i] = cell(rec, i, row)?;
        if c[i] >= counts[i] {
            return Err(FormatError::Row {
                row,
                message: format!("state coordinate {} outside 0..{}", c[i], counts[i]),
            });
        }
    }
    Ok(g.index(c))
}

fn parse_control(controls: &[String], rec: &csv::StringRecord, col: usize, row: usize) -> Result<usize, FormatError> {
    let name = rec.get(col).unwrap_or("");
    controls.iter().position(|c| c == name).ok_or_else(|| FormatError::Row {
        row,
        message: format!("unknown control `{name}`"),
    })
}

/// Dynamics CSV `(state_index…, control, velocity…)`.
pub fn write_dynamics_csv<W: Write>(w: W, p: &ControlProblem) -> Result<(), FormatError> {
    let g = p.states();
    let d = g.dim();
    let mut header = state_header(d, &["control"]);
    header.extend(indexed("velocity", d));
    let rows = (0..g.len()).flat_map(|x| {
        (0..p.controls().len()).map(move |a| {
            let mut r = state_key(g, x);
            r.push(p.controls()[a].clone());
            r.extend(p.velocity(x, a)[..d].iter().map(|v| v.to_string()));
            r
        })
    });
    write_table(w, &header, rows)
}

/// Costs CSV `(state_index…, time_index, control, cost)`.
pub fn write_costs_csv<W: Write>(w: W, p: &ControlProblem) -> Result<(), FormatError> {
    let g = p.states();
    let header = state_header(g.dim(), &["time_index", "control", "cost"]);
    let rows = (0..p.steps()).flat_map(|k| {
        (0..g.len()).flat_map(move |x| {
            (0..p.controls().len()).map(move |a| {
                let mut r = state_key(g, x);
                r.extend([k.to_string(), p.controls()[a].clone(), p.cost(x, k, a).to_string()]);
                r
            })
        })
    });
    write_table(w, &header, rows)
}

/// Assembles a problem from its header and the two tables; every
/// `(state, control)` and `(state, time, control)` must be listed once.
pub fn read_control_problem<R1: Read, R2: Read>(
    spec: &ControlSpec,
    dynamics: R1,
    costs: R2,
) -> Result<ControlProblem, FormatError> {
    let states = spec.grid.build()?;
    let steps = spec.steps()?;
    let d = states.dim();
    let ns = states.len();
    let na = spec.controls.len();
    if na == 0 {
        return Err(FormatError::Field {
            field: "controls",
            message: "no controls".to_string(),
        });
    }

    let mut header = state_header(d, &["control"]);
    header.extend(indexed("velocity", d));
    let mut offsets: Vec<Option<[i32; 2]>> = vec![None; ns * na];
    let cells_per_velocity = spec.dt / states.spacing();
    for (i, rec) in read_table(dynamics, &header)?.iter().enumerate() {
        let row = i + 1;
        let x = parse_state(&states, rec, row)?;
        let a = parse_control(&spec.controls, rec, d, row)?;
        let mut k = [0i32; 2];
        for (j, slot) in k.iter_mut().take(d).enumerate() {
            let v: f64 = cell(rec, d + 1 + j, row)?;
            let cells = v * cells_per_velocity;
            if !cells.is_finite() || (cells - cells.round()).abs() > 1e-9 * (1.0 + cells.abs()) {
                return Err(FormatError::Row {
                    row,
                    message: format!("velocity {v} does not move a whole number of cells per step"),
                });
            }
            *slot = cells.round() as i32;
        }
        if offsets[x * na + a].replace(k).is_some() {
            return Err(FormatError::Row {
                row,
                message: "state/control pair listed twice".to_string(),
            });
        }
    }
    let offsets = offsets
        .into_iter()
        .enumerate()
        .map(|(i, o)| {
            o.ok_or_else(|| FormatError::Field {
                field: "velocity",
                message: format!("missing for state {} control `{}`", i / na, spec.controls[i % na]),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let header = state_header(d, &["time_index", "control", "cost"]);
    let mut table: Vec<Option<f64>> = vec![None; steps * ns * na];
    for (i, rec) in read_table(costs, &header)?.iter().enumerate() {
        let row = i + 1;
        let x = parse_state(&states, rec, row)?;
        let k: usize = cell(rec, d, row)?;
        if k >= steps {
            return Err(FormatError::Row {
                row,
                message: format!("time index {k} outside 0..{steps}"),
            });
        }
        let a = parse_control(&spec.controls, rec, d + 1, row)?;
        let c: f64 = cell(rec, d + 2, row)?;
        if table[(k * ns + x) * na + a].replace(c).is_some() {
            return Err(FormatError::Row {
                row,
                message: "state/time/control triple listed twice".to_string(),
            });
        }
    }
    let costs = table
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            c.ok_or_else(|| FormatError::Field {
                field: "cost",
                message: format!(
                    "missing for time {} state {} control `{}`",
                    i / (ns * na),
                    (i / na) % ns,
                    spec.controls[i % na]
                ),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let initial = spec.initial_condition(&states)?;
    Ok(ControlProblem::from_tables(
        states,
        steps,
        spec.dt,
        spec.controls.clone(),
        offsets,
        costs,
        initial,
    )?)
}

/// Value-function CSV `(x…, t, v, argmin_control)`, `t` the remaining time.
pub fn write_value_function_csv<W: Write>(w: W, p: &ControlProblem, vf: &ValueFunction) -> Result<(), FormatError> {
    let g = p.states();
    let d = g.dim();
    let mut header = indexed("x", d);
    header.extend(["t".to_string(), "v".to_string(), "argmin_control".to_string()]);
    let rows = (0..=p.steps()).flat_map(|j| {
        (0..g.len()).map(move |x| {
            let mut r: Vec<String> = g.position(x)[..d].iter().map(|c| c.to_string()).collect();
            r.push((j as f64 * p.dt()).to_string());
            r.push(vf.value(x, j).to_string());
            r.push(vf.argmin(x, j).map(|a| p.controls()[a].clone()).unwrap_or_default());
            r
        })
    });
    write_table(w, &header, rows)
}

/// Control arc slack CSV `(layer, state_index…, control, u, w, flow)`.
pub fn write_control_slack_csv<W: Write>(
    w: W,
    p: &ControlProblem,
    cert: &ControlCertificate,
    flow: &[f64],
) -> Result<(), FormatError> {
    let g = p.states();
    let mut header = vec!["layer".to_string()];
    header.extend(indexed("state_index", g.dim()));
    header.extend(["control", "u", "w", "flow"].map(String::from));
    let rows = p.arcs().iter().enumerate().map(|(i, a): (usize, &ControlArc)| {
        let mut r = vec![a.layer.to_string()];
        r.extend(state_key(g, a.state));
        r.extend([
            p.controls()[a.control].clone(),
            cert.u_at(p, a.state, a.layer).to_string(),
            cert.w[i].to_string(),
            flow[i].to_string(),
        ]);
        r
    });
    write_table(w, &header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use actionlab_core::sample_lagrangian;

    #[test]
    fn header_mismatch_is_reported() {
        let grid = build_torus_grid(1, 4, 1, 0.25).unwrap();
        let err = read_measure_csv("node,offset,weight\n".as_bytes(), &grid).unwrap_err();
        assert!(matches!(err, FormatError::Header { .. }));
    }

    #[test]
    fn bad_rows_are_located() {
        let grid = build_torus_grid(1, 4, 1, 0.25).unwrap();
        let text = "node_index,offset,weight\n0,1,0.5\n9,0,0.5\n";
        let err = read_measure_csv(text.as_bytes(), &grid).unwrap_err();
        assert!(matches!(err, FormatError::Row { row: 2, .. }), "{err}");
        let text = "node_index,offset,weight\n0,3,0.5\n";
        assert!(matches!(read_measure_csv(text.as_bytes(), &grid), Err(FormatError::Row { row: 1, .. })));
    }

    #[test]
    fn lagrangian_needs_every_edge() {
        let grid = build_torus_grid(1, 3, 1, 1.0).unwrap();
        let table = sample_lagrangian(&grid, |_, v| v[0] * v[0]).unwrap();
        let mut buf = Vec::new();
        write_lagrangian_csv(&mut buf, &table).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let short: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
        assert!(matches!(read_lagrangian_csv(short.as_bytes(), &grid), Err(FormatError::Field { .. })));
        let doubled = format!("{text}0,0,1\n");
        assert!(matches!(read_lagrangian_csv(doubled.as_bytes(), &grid), Err(FormatError::Row { .. })));
    }

    #[test]
    fn extended_floats_round_trip() {
        let s = SolutionSummary {
            value: f64::NEG_INFINITY,
            status: "UNBOUNDED".into(),
            mass: 0.0,
        };
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"-inf\""));
        let back: SolutionSummary = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.status().unwrap(), Status::Unbounded);
    }

    #[test]
    fn fractional_velocity_is_rejected() {
        let spec = ControlSpec {
            grid: StateGridSpec {
                dim: 1,
                counts: vec![3],
                origin: vec![0.0],
                spacing: 1.0,
            },
            controls: vec!["a".into()],
            t0: 1.0,
            dt: 1.0,
            initial: InitialSpec::Free,
        };
        let dynamics = "state_index,control,velocity\n0,a,0.5\n1,a,0\n2,a,0\n";
        let costs = "state_index,time_index,control,cost\n0,0,a,1\n1,0,a,1\n2,0,a,1\n";
        let err = read_control_problem(&spec, dynamics.as_bytes(), costs.as_bytes()).unwrap_err();
        assert!(matches!(err, FormatError::Row { row: 1, .. }), "{err}");
        let dynamics = "state_index,control,velocity\n0,a,0\n1,a,0\n2,a,0\n";
        let p = read_control_problem(&spec, dynamics.as_bytes(), costs.as_bytes()).unwrap();
        assert_eq!(p.steps(), 1);
        let bad = ControlSpec { t0: 1.5, dt: 1.0, ..spec };
        assert!(bad.steps().is_err());
    }
}
