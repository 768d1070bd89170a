//! Finite-horizon control on a box grid.
//!
//! States live on a box grid in one or two dimensions, time runs over
//! `T` steps of length `Δt`, and each control moves a state by an integer grid
//! offset per step. Arcs leaving the box are not admissible.
//!
//! The value function `v(x, τ)` is the optimal cost over the last `τ` units of
//! the horizon, starting from `x` at time `t₀ − τ`; it is filled by one backward
//! pass and `v(x, t₀)` is the cost of the full problem. The relaxed problem is a
//! min-cost flow through the time-layered graph, and its certificate
//! `ℓ = c₀ + du∘(f, 𝟙) + w` is built from the cost-to-go.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::graph::{self, FlowOutcome};
use crate::grid::{DiscreteMeasure, GridError, PhaseGrid};
use crate::measure_lp::{decompose, Status};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControlError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("state dimension must be 1 or 2, got {0}")]
    BadDimension(usize),
    #[error("state grid needs at least one node per axis")]
    EmptyGrid,
    #[error("spacing must be positive and finite, got {0}")]
    BadSpacing(f64),
    #[error("time step must be positive and finite, got {0}")]
    BadTimeStep(f64),
    #[error("horizon needs at least one step")]
    NoSteps,
    #[error("control set is empty")]
    NoControls,
    #[error("{what} has length {got}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("cost at state {state}, time index {layer}, control {control} is not finite")]
    NonFiniteCost {
        state: usize,
        layer: usize,
        control: usize,
    },
    #[error("velocity of control {control} at state {state} does not land on a grid node")]
    NotGridCompatible { state: usize, control: usize },
    #[error("state {state} has no control that stays in the box")]
    NoAdmissibleControl { state: usize },
    #[error("initial distribution must be nonnegative with positive mass")]
    BadInitial,
    #[error("state {state} out of range ({count} states)")]
    StateOutOfRange { state: usize, count: usize },
    #[error("relaxed solution is not optimal (status {})", .0.as_str())]
    NotOptimal(Status),
    #[error("relaxed solution belongs to a different problem")]
    ProblemMismatch,
    #[error("initial states in the support have different values ({low} vs {high})")]
    MixedInitialValues { low: f64, high: f64 },
}

/// Box grid of states: `origin + i·spacing` along each axis.
#[derive(Debug, Clone, PartialEq)]
pub struct StateGrid {
    dim: usize,
    counts: [usize; 2],
    origin: [f64; 2],
    spacing: f64,
}

impl StateGrid {
    pub fn new(dim: usize, counts: [usize; 2], origin: [f64; 2], spacing: f64) -> Result<Self, ControlError> {
        if !(1..=2).contains(&dim) {
            return Err(ControlError::BadDimension(dim));
        }
        let counts = if dim == 1 { [counts[0], 1] } else { counts };
        if counts[0] == 0 || counts[1] == 0 {
            return Err(ControlError::EmptyGrid);
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(ControlError::BadSpacing(spacing));
        }
        let origin = if dim == 1 { [origin[0], 0.0] } else { origin };
        Ok(Self {
            dim,
            counts,
            origin,
            spacing,
        })
    }

    pub fn line(count: usize, origin: f64, spacing: f64) -> Result<Self, ControlError> {
        Self::new(1, [count, 1], [origin, 0.0], spacing)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn counts(&self) -> [usize; 2] {
        self.counts
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.counts[0] * self.counts[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coords(&self, x: usize) -> [usize; 2] {
        [x / self.counts[1], x % self.counts[1]]
    }

    pub fn index(&self, c: [usize; 2]) -> usize {
        c[0] * self.counts[1] + c[1]
    }

    pub fn position(&self, x: usize) -> [f64; 2] {
        let c = self.coords(x);
        [
            self.origin[0] + c[0] as f64 * self.spacing,
            if self.dim == 2 {
                self.origin[1] + c[1] as f64 * self.spacing
            } else {
                0.0
            },
        ]
    }

    /// Node reached by an integer offset, if it stays in the box.
    pub fn shift(&self, x: usize, offset: [i32; 2]) -> Option<usize> {
        let c = self.coords(x);
        let mut out = [0usize; 2];
        for i in 0..2 {
            let k = if i < self.dim { offset[i] } else { 0 };
            if i >= self.dim && offset[i] != 0 {
                return None;
            }
            let v = c[i] as i64 + k as i64;
            if v < 0 || v >= self.counts[i] as i64 {
                return None;
            }
            out[i] = v as usize;
        }
        Some(self.index(out))
    }

    /// Whether `x` lies on the boundary of the box.
    pub fn on_edge(&self, x: usize) -> bool {
        let c = self.coords(x);
        (0..self.dim).any(|i| c[i] == 0 || c[i] + 1 == self.counts[i])
    }
}

/// Initial data of the relaxed problem.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    /// Prescribed mass per state at time 0.
    Fixed(Vec<f64>),
    /// Any probability distribution at time 0.
    Free,
}

impl InitialCondition {
    pub fn point(states: usize, x: usize) -> Self {
        let mut w = vec![0.0; states];
        w[x] = 1.0;
        InitialCondition::Fixed(w)
    }
}

/// One admissible step `(state, layer) → (next, layer + 1)` under `control`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControlArc {
    pub layer: usize,
    pub state: usize,
    pub control: usize,
    pub next: usize,
}

/// Two controls with the same displacement at a state and time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DuplicateControl {
    pub state: usize,
    pub layer: usize,
    pub kept: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlProblem {
    states: StateGrid,
    steps: usize,
    dt: f64,
    controls: Vec<String>,
    /// `[x·A + a]`, `None` where the step leaves the box.
    next: Vec<Option<usize>>,
    offsets: Vec<[i32; 2]>,
    /// `[(k·S + x)·A + a]` for layers `k < T`.
    costs: Vec<f64>,
    initial: InitialCondition,
    arcs: Vec<ControlArc>,
}

impl ControlProblem {
    /// Builds a problem from tabulated offsets `[x·A + a]` and costs `[(k·S + x)·A + a]`.
    pub fn from_tables(
        states: StateGrid,
        steps: usize,
        dt: f64,
        controls: Vec<String>,
        offsets: Vec<[i32; 2]>,
        costs: Vec<f64>,
        initial: InitialCondition,
    ) -> Result<Self, ControlError> {
        if steps == 0 {
            return Err(ControlError::NoSteps);
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(ControlError::BadTimeStep(dt));
        }
        let na = controls.len();
        if na == 0 {
            return Err(ControlError::NoControls);
        }
        let ns = states.len();
        if offsets.len() != ns * na {
            return Err(ControlError::LengthMismatch {
                what: "dynamics table",
                expected: ns * na,
                got: offsets.len(),
            });
        }
        if costs.len() != steps * ns * na {
            return Err(ControlError::LengthMismatch {
                what: "cost table",
                expected: steps * ns * na,
                got: costs.len(),
            });
        }
        if let Some(i) = costs.iter().position(|c| !c.is_finite()) {
            return Err(ControlError::NonFiniteCost {
                state: (i / na) % ns,
                layer: i / (na * ns),
                control: i % na,
            });
        }
        match &initial {
            InitialCondition::Fixed(w) => {
                if w.len() != ns {
                    return Err(ControlError::LengthMismatch {
                        what: "initial distribution",
                        expected: ns,
                        got: w.len(),
                    });
                }
                if w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) || w.iter().sum::<f64>() <= 0.0 {
                    return Err(ControlError::BadInitial);
                }
            }
            InitialCondition::Free => {}
        }

        let next: Vec<Option<usize>> = (0..ns * na)
            .map(|i| states.shift(i / na, offsets[i]))
            .collect();
        if let Some(state) = (0..ns).find(|&x| next[x * na..(x + 1) * na].iter().all(Option::is_none)) {
            return Err(ControlError::NoAdmissibleControl { state });
        }
        let mut arcs = Vec::new();
        for layer in 0..steps {
            for state in 0..ns {
                for control in 0..na {
                    if let Some(nx) = next[state * na + control] {
                        arcs.push(ControlArc {
                            layer,
                            state,
                            control,
                            next: nx,
                        });
                    }
                }
            }
        }
        Ok(Self {
            states,
            steps,
            dt,
            controls,
            next,
            offsets,
            costs,
            initial,
            arcs,
        })
    }

    /// Builds a problem from a velocity field and a running cost.
    ///
    /// `velocity(position, a)` must move by a whole number of grid cells per step;
    /// `cost(position, t, a)` is sampled at `t = k·Δt`.
    pub fn from_fns<V, C>(
        states: StateGrid,
        steps: usize,
        dt: f64,
        controls: Vec<String>,
        velocity: V,
        cost: C,
        initial: InitialCondition,
    ) -> Result<Self, ControlError>
    where
        V: Fn(&[f64], usize) -> [f64; 2],
        C: Fn(&[f64], f64, usize) -> f64,
    {
        let ns = states.len();
        let na = controls.len();
        let d = states.dim();
        let mut offsets = Vec::with_capacity(ns * na);
        for x in 0..ns {
            let pos = states.position(x);
            for a in 0..na {
                let v = velocity(&pos[..d], a);
                let mut off = [0i32; 2];
                for i in 0..d {
                    let cells = v[i] * dt / states.spacing();
                    let r = libm_round(cells);
                    if !cells.is_finite() || (cells - r).abs() > 1e-9 * (1.0 + cells.abs()) {
                        return Err(ControlError::NotGridCompatible { state: x, control: a });
                    }
                    off[i] = r as i32;
                }
                offsets.push(off);
            }
        }
        let mut costs = Vec::with_capacity(steps * ns * na);
        for k in 0..steps {
            for x in 0..ns {
                let pos = states.position(x);
                for a in 0..na {
                    costs.push(cost(&pos[..d], k as f64 * dt, a));
                }
            }
        }
        Self::from_tables(states, steps, dt, controls, offsets, costs, initial)
    }

    pub fn states(&self) -> &StateGrid {
        &self.states
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    pub fn controls(&self) -> &[String] {
        &self.controls
    }

    pub fn initial(&self) -> &InitialCondition {
        &self.initial
    }

    pub fn with_initial(&self, initial: InitialCondition) -> Result<Self, ControlError> {
        Self::from_tables(
            self.states.clone(),
            self.steps,
            self.dt,
            self.controls.clone(),
            self.offsets.clone(),
            self.costs.clone(),
            initial,
        )
    }

    pub fn offset(&self, x: usize, a: usize) -> [i32; 2] {
        self.offsets[x * self.controls.len() + a]
    }

    /// Velocity `offset·Δx/Δt` of control `a` at `x`.
    pub fn velocity(&self, x: usize, a: usize) -> [f64; 2] {
        let o = self.offset(x, a);
        let s = self.states.spacing() / self.dt;
        [o[0] as f64 * s, o[1] as f64 * s]
    }

    /// Successor of `x` under `a`, `None` if it leaves the box.
    pub fn next_state(&self, x: usize, a: usize) -> Option<usize> {
        self.next[x * self.controls.len() + a]
    }

    /// Running cost `ℓ(x, k·Δt, a)` for `k < T`.
    pub fn cost(&self, x: usize, layer: usize, a: usize) -> f64 {
        self.costs[(layer * self.states.len() + x) * self.controls.len() + a]
    }

    pub fn offsets(&self) -> &[[i32; 2]] {
        &self.offsets
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    /// Admissible arcs ordered by layer, state, control.
    pub fn arcs(&self) -> &[ControlArc] {
        &self.arcs
    }

    /// Node index of `(state, layer)` in the time-layered graph.
    pub fn layered_node(&self, state: usize, layer: usize) -> usize {
        layer * self.states.len() + state
    }

    /// Pairs of admissible controls with the same displacement; the dynamic
    /// programme always keeps the cheaper (lower index on ties).
    pub fn lint(&self) -> Vec<DuplicateControl> {
        let na = self.controls.len();
        let mut out = Vec::new();
        for layer in 0..self.steps {
            for state in 0..self.states.len() {
                for a in 0..na {
                    if self.next_state(state, a).is_none() {
                        continue;
                    }
                    for b in a + 1..na {
                        if self.next_state(state, b).is_some() && self.offset(state, a) == self.offset(state, b) {
                            let (ca, cb) = (self.cost(state, layer, a), self.cost(state, layer, b));
                            let (kept, dropped) = if cb < ca { (b, a) } else { (a, b) };
                            out.push(DuplicateControl {
                                state,
                                layer,
                                kept,
                                dropped,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

fn libm_round(x: f64) -> f64 {
    // round half away from zero without std
    let t = x as i64 as f64;
    let frac = x - t;
    if frac >= 0.5 {
        t + 1.0
    } else if frac <= -0.5 {
        t - 1.0
    } else {
        t
    }
}

/// `v(x, τ)` on the grid `τ = j·Δt`, `j = 0..=T`, with optimal controls.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    states: usize,
    steps: usize,
    dt: f64,
    values: Vec<f64>,
    argmin: Vec<Option<usize>>,
}

impl ValueFunction {
    pub fn states(&self) -> usize {
        self.states
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// `v(x, j·Δt)`.
    pub fn value(&self, x: usize, j: usize) -> f64 {
        self.values[j * self.states + x]
    }

    /// Optimal first control with `j` steps remaining (`None` at `j = 0`).
    pub fn argmin(&self, x: usize, j: usize) -> Option<usize> {
        self.argmin[j * self.states + x]
    }

    /// Cost-to-go from `(x, layer k)`, i.e. `v(x, (T − k)·Δt)`.
    pub fn cost_to_go(&self, x: usize, layer: usize) -> f64 {
        self.value(x, self.steps - layer)
    }

    /// Full-horizon optimal trajectory from `x0` following the recorded argmins.
    pub fn optimal_trajectory(&self, problem: &ControlProblem, x0: usize) -> Vec<usize> {
        let mut path = vec![x0];
        let mut x = x0;
        for j in (1..=self.steps).rev() {
            let a = self.argmin(x, j).expect("argmin recorded for j ≥ 1");
            x = problem.next_state(x, a).expect("admissible argmin");
            path.push(x);
        }
        path
    }
}

/// Backward dynamic programming over the horizon; ties go to the lowest control index.
pub fn solve_value_function(p: &ControlProblem) -> ValueFunction {
    let ns = p.states.len();
    let na = p.controls.len();
    let steps = p.steps;
    let mut values = vec![0.0; (steps + 1) * ns];
    let mut argmin = vec![None; (steps + 1) * ns];
    for j in 1..=steps {
        let layer = steps - j;
        for x in 0..ns {
            let mut best = f64::INFINITY;
            let mut best_a = None;
            for a in 0..na {
                if let Some(y) = p.next_state(x, a) {
                    let c = p.dt * p.cost(x, layer, a) + values[(j - 1) * ns + y];
                    if c < best {
                        best = c;
                        best_a = Some(a);
                    }
                }
            }
            values[j * ns + x] = best;
            argmin[j * ns + x] = best_a;
        }
    }
    ValueFunction {
        states: ns,
        steps,
        dt: p.dt,
        values,
        argmin,
    }
}

/// Optimal measure of the relaxed problem on the time-layered graph.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedSolution {
    /// Layered graph: node `k·S + x`, one edge per admissible arc in [`ControlProblem::arcs`] order.
    pub layered: PhaseGrid,
    /// Arc weights `flow / T`; a probability measure for unit initial mass.
    pub measure: DiscreteMeasure,
    /// Mass per arc.
    pub flow: Vec<f64>,
    /// `Σ flow·Δt·ℓ`.
    pub value: f64,
    pub status: Status,
    /// Mass leaving each state at time 0.
    pub initial: Vec<f64>,
    /// Supported states on the box boundary.
    pub boundary_contact: Vec<usize>,
}

impl RelaxedSolution {
    /// Supported state paths from time 0 to the horizon, with their masses.
    pub fn trajectories(&self, p: &ControlProblem) -> Vec<(Vec<usize>, f64)> {
        let ns = p.states.len();
        decompose(&self.measure)
            .paths
            .into_iter()
            .map(|w| {
                (
                    w.nodes.iter().map(|&n| n % ns).collect(),
                    w.weight * p.steps as f64,
                )
            })
            .collect()
    }
}

fn layered_grid(p: &ControlProblem) -> PhaseGrid {
    let ns = p.states.len();
    let edges: Vec<(usize, usize)> = p
        .arcs
        .iter()
        .map(|a| (a.layer * ns + a.state, (a.layer + 1) * ns + a.next))
        .collect();
    PhaseGrid::network((p.steps + 1) * ns, &edges, p.dt).expect("layered graph is well formed")
}

/// Min-cost flow from the initial distribution through the layered graph.
pub fn solve_relaxed_lp(p: &ControlProblem) -> Result<RelaxedSolution, ControlError> {
    let ns = p.states.len();
    let layered = layered_grid(p);
    let inner = layered.node_count();
    let free = matches!(p.initial, InitialCondition::Free);
    let sink = inner;
    let source = inner + 1;
    let node_count = inner + 1 + usize::from(free);

    let mut tails = layered.tails().to_vec();
    let mut heads = layered.heads().to_vec();
    let mut costs: Vec<f64> = p.arcs.iter().map(|a| p.dt * p.cost(a.state, a.layer, a.control)).collect();
    for x in 0..ns {
        tails.push(p.steps * ns + x);
        heads.push(sink);
        costs.push(0.0);
    }
    let mut supply = vec![0.0; node_count];
    match &p.initial {
        InitialCondition::Fixed(w) => {
            supply[..ns].copy_from_slice(w);
            supply[sink] = -w.iter().sum::<f64>();
        }
        InitialCondition::Free => {
            for x in 0..ns {
                tails.push(source);
                heads.push(x);
                costs.push(0.0);
            }
            supply[source] = 1.0;
            supply[sink] = -1.0;
        }
    }

    let n_arcs = p.arcs.len();
    match graph::min_cost_flow(node_count, &tails, &heads, &costs, &supply) {
        FlowOutcome::Infeasible { .. } => Ok(RelaxedSolution {
            measure: DiscreteMeasure::zero(&layered),
            layered,
            flow: vec![0.0; n_arcs],
            value: f64::INFINITY,
            status: Status::Infeasible,
            initial: vec![0.0; ns],
            boundary_contact: Vec::new(),
        }),
        FlowOutcome::Optimal { flow, .. } => {
            let total: f64 = supply.iter().filter(|&&s| s > 0.0).sum();
            let eps = 1e-13 * total.max(1.0);
            let flow: Vec<f64> = flow[..n_arcs]
                .iter()
                .map(|&f| if f > eps { f } else { 0.0 })
                .collect();
            let t = p.steps as f64;
            let measure = DiscreteMeasure::from_weights(
                &layered,
                flow.iter().enumerate().filter(|(_, &f)| f > 0.0).map(|(e, &f)| (e, f / t)),
            )?;
            let value = flow.iter().zip(&costs).map(|(f, c)| f * c).sum();
            let mut initial = vec![0.0; ns];
            let mut touched = vec![false; ns];
            for (arc, &f) in p.arcs.iter().zip(&flow) {
                if f > 0.0 {
                    if arc.layer == 0 {
                        initial[arc.state] += f;
                    }
                    touched[arc.state] = true;
                    touched[arc.next] = true;
                }
            }
            let boundary_contact = (0..ns).filter(|&x| touched[x] && p.states.on_edge(x)).collect();
            Ok(RelaxedSolution {
                layered,
                measure,
                flow,
                value,
                status: Status::Optimal,
                initial,
                boundary_contact,
            })
        }
    }
}

/// `ℓ = c₀ + (u(next, k+1) − u(x, k))/Δt + w` on every admissible arc.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlCertificate {
    pub c0: f64,
    /// `u(x, k)` at layered node `k·S + x`; zero on the first and last layer.
    pub u: Vec<f64>,
    /// Slack per arc, in [`ControlProblem::arcs`] order.
    pub w: Vec<f64>,
    /// Arcs reachable from the supported initial states.
    pub reachable: Vec<bool>,
    /// `Σ μ·ℓ / mass`, reported next to `c0`.
    pub mean_cost: f64,
}

impl ControlCertificate {
    pub fn u_at(&self, p: &ControlProblem, x: usize, layer: usize) -> f64 {
        self.u[p.layered_node(x, layer)]
    }

    /// Smallest slack over reachable arcs.
    pub fn min_reachable_slack(&self) -> f64 {
        self.w
            .iter()
            .zip(&self.reachable)
            .filter(|(_, &r)| r)
            .map(|(w, _)| *w)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Certificate of an optimal relaxed solution.
///
/// All supported initial states must share the same optimal value; otherwise no
/// `u` vanishing at time 0 makes every supported arc tight.
pub fn certify_control(
    p: &ControlProblem,
    solution: &RelaxedSolution,
) -> Result<ControlCertificate, ControlError> {
    if solution.status != Status::Optimal {
        return Err(ControlError::NotOptimal(solution.status));
    }
    let ns = p.states.len();
    if solution.flow.len() != p.arcs.len() || solution.initial.len() != ns {
        return Err(ControlError::ProblemMismatch);
    }
    let vf = solve_value_function(p);
    let steps = p.steps;

    let supported: Vec<usize> = (0..ns).filter(|&x| solution.initial[x] > 0.0).collect();
    let values: Vec<f64> = supported.iter().map(|&x| vf.value(x, steps)).collect();
    let low = values.iter().copied().fold(f64::INFINITY, f64::min);
    let high = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if supported.is_empty() {
        return Err(ControlError::ProblemMismatch);
    }
    if high - low > 1e-9 * (1.0 + low.abs()) {
        return Err(ControlError::MixedInitialValues { low, high });
    }
    let t0 = p.horizon();
    let c0 = low / t0;

    let mut u = vec![0.0; (steps + 1) * ns];
    for k in 1..steps {
        for x in 0..ns {
            u[k * ns + x] = c0 * (t0 - k as f64 * p.dt) - vf.cost_to_go(x, k);
        }
    }

    let w: Vec<f64> = p
        .arcs
        .iter()
        .map(|a| {
            let du = (u[(a.layer + 1) * ns + a.next] - u[a.layer * ns + a.state]) / p.dt;
            p.cost(a.state, a.layer, a.control) - c0 - du
        })
        .collect();

    let mut live = vec![false; (steps + 1) * ns];
    for &x in &supported {
        live[x] = true;
    }
    let mut reachable = vec![false; p.arcs.len()];
    // arcs are sorted by layer
    for (i, a) in p.arcs.iter().enumerate() {
        if live[a.layer * ns + a.state] {
            reachable[i] = true;
            live[(a.layer + 1) * ns + a.next] = true;
        }
    }

    let mass: f64 = solution.initial.iter().sum();
    let mean_cost = solution
        .measure
        .support()
        .map(|(e, m)| {
            let a = p.arcs[e];
            m * p.cost(a.state, a.layer, a.control)
        })
        .sum::<f64>()
        / mass;

    Ok(ControlCertificate {
        c0,
        u,
        w,
        reachable,
        mean_cost,
    })
}

/// `(max |w| on the support, min w over reachable arcs off the support)`.
///
/// Either entry is 0 when its arc set is empty.
pub fn maximum_principle_check(cert: &ControlCertificate, solution: &RelaxedSolution) -> (f64, f64) {
    let mut on = 0.0f64;
    let mut off = f64::INFINITY;
    for (i, &w) in cert.w.iter().enumerate() {
        if solution.flow.get(i).is_some_and(|&f| f > 0.0) {
            on = on.max(w.abs());
        } else if cert.reachable[i] {
            off = off.min(w);
        }
    }
    (on, if off.is_finite() { off } else { 0.0 })
}

/// Largest gap along a supported trajectory `y(0..=T)` between the optimal cost
/// accumulated up to step `k` and `u(y(k), k) − u(y(0), 0) + c₀·kΔt`.
///
/// The accumulated cost is `v(y(0), t₀) − v(y(k), t₀ − kΔt)` by dynamic programming.
pub fn check_u_v_relation(
    p: &ControlProblem,
    cert: &ControlCertificate,
    vf: &ValueFunction,
    trajectory: &[usize],
) -> Result<f64, ControlError> {
    let ns = p.states.len();
    if trajectory.len() != p.steps + 1 {
        return Err(ControlError::LengthMismatch {
            what: "trajectory",
            expected: p.steps + 1,
            got: trajectory.len(),
        });
    }
    if let Some(&state) = trajectory.iter().find(|&&x| x >= ns) {
        return Err(ControlError::StateOutOfRange { state, count: ns });
    }
    let y0 = trajectory[0];
    let steps = p.steps;
    let mut worst = 0.0f64;
    for (k, &y) in trajectory.iter().enumerate() {
        let accumulated = vf.value(y0, steps) - vf.value(y, steps - k);
        let via_u = cert.u_at(p, y, k) - cert.u_at(p, y0, 0) + cert.c0 * k as f64 * p.dt;
        worst = worst.max((accumulated - via_u).abs());
    }
    Ok(worst)
}

/// `H(x, k, p) = max over admissible a of −f(x, a)·p − ℓ(x, k·Δt, a)`.
pub fn control_hamiltonian(p: &ControlProblem, x: usize, layer: usize, covector: [f64; 2]) -> f64 {
    (0..p.controls.len())
        .filter(|&a| p.next_state(x, a).is_some())
        .map(|a| {
            let f = p.velocity(x, a);
            -(f[0] * covector[0] + f[1] * covector[1]) - p.cost(x, layer, a)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Largest `|∂_τ v + H(x, ∂_x v)|` along optimal trajectories from the initial support.
///
/// Time differences are central inside the horizon and one-sided at its ends;
/// space differences are central, one-sided on the box boundary.
pub fn hjb_residual(vf: &ValueFunction, p: &ControlProblem) -> f64 {
    let steps = p.steps;
    let starts: Vec<usize> = match &p.initial {
        InitialCondition::Fixed(w) => (0..w.len()).filter(|&x| w[x] > 0.0).collect(),
        InitialCondition::Free => {
            let best = (0..vf.states).map(|x| vf.value(x, steps)).fold(f64::INFINITY, f64::min);
            (0..vf.states)
                .filter(|&x| vf.value(x, steps) <= best + 1e-12 * (1.0 + best.abs()))
                .collect()
        }
    };
    let mut worst = 0.0f64;
    for x0 in starts {
        let path = vf.optimal_trajectory(p, x0);
        for (s, &x) in path.iter().enumerate() {
            let j = steps - s;
            let vt = if j == steps {
                (vf.value(x, j) - vf.value(x, j - 1)) / p.dt
            } else if j == 0 {
                (vf.value(x, 1) - vf.value(x, 0)) / p.dt
            } else {
                (vf.value(x, j + 1) - vf.value(x, j - 1)) / (2.0 * p.dt)
            };
            let grad = space_gradient(vf, p, x, j);
            let h = control_hamiltonian(p, x, s.min(steps - 1), grad);
            worst = worst.max((vt + h).abs());
        }
    }
    worst
}

fn space_gradient(vf: &ValueFunction, p: &ControlProblem, x: usize, j: usize) -> [f64; 2] {
    let g = &p.states;
    let mut grad = [0.0; 2];
    for (i, slot) in grad.iter_mut().enumerate().take(g.dim()) {
        let mut unit = [0i32; 2];
        unit[i] = 1;
        let plus = g.shift(x, unit);
        let minus = g.shift(x, [-unit[0], -unit[1]]);
        let dx = g.spacing();
        *slot = match (minus, plus) {
            (Some(m), Some(q)) => (vf.value(q, j) - vf.value(m, j)) / (2.0 * dx),
            (None, Some(q)) => (vf.value(q, j) - vf.value(x, j)) / dx,
            (Some(m), None) => (vf.value(x, j) - vf.value(m, j)) / dx,
            (None, None) => 0.0,
        };
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| i.to_string()).collect()
    }

    /// States {−Δx, 0, Δx}, controls ±1, ℓ = x², two steps.
    fn three_state(dx: f64, dt: f64, initial: InitialCondition) -> ControlProblem {
        let states = StateGrid::line(3, -dx, dx).unwrap();
        ControlProblem::from_fns(
            states,
            2,
            dt,
            labels(2),
            |_, a| [if a == 0 { -dx / dt } else { dx / dt }, 0.0],
            |x, _, _| x[0] * x[0],
            initial,
        )
        .unwrap()
    }

    #[test]
    fn constant_cost_value() {
        let states = StateGrid::line(4, 0.0, 0.5).unwrap();
        let p = ControlProblem::from_fns(
            states,
            3,
            0.25,
            labels(1),
            |_, _| [0.0, 0.0],
            |_, _, _| 1.5,
            InitialCondition::point(4, 1),
        )
        .unwrap();
        let vf = solve_value_function(&p);
        for j in 0..=3 {
            for x in 0..4 {
                assert!((vf.value(x, j) - 1.5 * 0.25 * j as f64).abs() < 1e-15);
            }
        }
        let sol = solve_relaxed_lp(&p).unwrap();
        let cert = certify_control(&p, &sol).unwrap();
        assert!((cert.c0 - 1.5).abs() < 1e-15);
        assert!(cert.u.iter().all(|u| u.abs() < 1e-15));
        assert!(cert.w.iter().all(|w| w.abs() < 1e-14));
        assert!(hjb_residual(&vf, &p) < 1e-14);
        let (on, off) = maximum_principle_check(&cert, &sol);
        assert!(on < 1e-14);
        assert_eq!(off, 0.0);
    }

    #[test]
    fn three_state_value() {
        let (dx, dt) = (0.5, 0.25);
        let p = three_state(dx, dt, InitialCondition::point(3, 1));
        let vf = solve_value_function(&p);
        assert!((vf.value(1, 2) - dt * dx * dx).abs() < 1e-15);
        assert_eq!(vf.value(1, 0), 0.0);
        // from the left end only +1 stays in the box
        assert_eq!(p.next_state(0, 0), None);
        assert_eq!(p.arcs().len(), 8);
    }

    #[test]
    fn three_state_certificate() {
        let p = three_state(0.5, 0.25, InitialCondition::point(3, 1));
        let sol = solve_relaxed_lp(&p).unwrap();
        let vf = solve_value_function(&p);
        assert!((sol.value - vf.value(1, 2)).abs() < 1e-15);
        let cert = certify_control(&p, &sol).unwrap();
        let (on, off) = maximum_principle_check(&cert, &sol);
        assert!(on <= 1e-12);
        assert!(off >= 0.0);
        // every admissible path alternates between 0 and ±Δx, so all arcs are tight
        assert!(cert.w.iter().all(|w| w.abs() < 1e-12));
        for (path, _) in sol.trajectories(&p) {
            assert!(check_u_v_relation(&p, &cert, &vf, &path).unwrap() <= 1e-12);
        }
        assert!((cert.mean_cost - cert.c0).abs() < 1e-12);
    }

    #[test]
    fn resting_off_centre_has_slack() {
        let (dx, dt) = (0.5, 0.25);
        let states = StateGrid::line(3, -dx, dx).unwrap();
        let p = ControlProblem::from_fns(
            states,
            2,
            dt,
            labels(3),
            |_, a| [(a as f64 - 1.0) * dx / dt, 0.0],
            |x, _, _| x[0] * x[0],
            InitialCondition::point(3, 1),
        )
        .unwrap();
        let sol = solve_relaxed_lp(&p).unwrap();
        assert_eq!(sol.value, 0.0);
        let cert = certify_control(&p, &sol).unwrap();
        let (on, off) = maximum_principle_check(&cert, &sol);
        assert!(on <= 1e-12);
        assert!(off >= 0.0);
        // leaving the centre costs Δx² per unit time more than resting
        let strict = cert.w.iter().zip(&cert.reachable).filter(|(w, &r)| r && **w > 0.2).count();
        assert_eq!(strict, 2);
    }

    #[test]
    fn uniform_initial_is_average() {
        let p = three_state(0.5, 0.25, InitialCondition::Fixed(vec![0.5, 0.0, 0.5]));
        let vf = solve_value_function(&p);
        let sol = solve_relaxed_lp(&p).unwrap();
        let avg = 0.5 * (vf.value(0, 2) + vf.value(2, 2));
        assert!((sol.value - avg).abs() < 1e-15);
    }

    #[test]
    fn free_initial_picks_cheapest_start() {
        let p = three_state(0.5, 0.25, InitialCondition::Free);
        let vf = solve_value_function(&p);
        let sol = solve_relaxed_lp(&p).unwrap();
        let best = (0..3).map(|x| vf.value(x, 2)).fold(f64::INFINITY, f64::min);
        assert!((sol.value - best).abs() < 1e-15);
        let cert = certify_control(&p, &sol).unwrap();
        assert!(cert.min_reachable_slack() >= -1e-12);
    }

    #[test]
    fn mixed_initial_values_rejected() {
        let states = StateGrid::line(3, 0.0, 1.0).unwrap();
        let p = ControlProblem::from_fns(
            states,
            2,
            1.0,
            labels(1),
            |_, _| [0.0, 0.0],
            |x, _, _| x[0],
            InitialCondition::Fixed(vec![0.5, 0.5, 0.0]),
        )
        .unwrap();
        let sol = solve_relaxed_lp(&p).unwrap();
        assert!(matches!(
            certify_control(&p, &sol),
            Err(ControlError::MixedInitialValues { .. })
        ));
    }

    #[test]
    fn single_control_telescopes() {
        let states = StateGrid::line(5, 0.0, 1.0).unwrap();
        let p = ControlProblem::from_fns(
            states,
            3,
            1.0,
            labels(1),
            |_, _| [0.0, 0.0],
            |x, t, _| x[0] + 2.0 * t,
            InitialCondition::point(5, 1),
        )
        .unwrap();
        let vf = solve_value_function(&p);
        // resting at x = 1: costs 1, 1 + 2, 1 + 4
        assert!((vf.value(1, 3) - 9.0).abs() < 1e-15);
        let sol = solve_relaxed_lp(&p).unwrap();
        let cert = certify_control(&p, &sol).unwrap();
        let (on, off) = maximum_principle_check(&cert, &sol);
        assert!(on < 1e-14);
        assert_eq!(off, 0.0);
        assert!((cert.u_at(&p, 1, 1) + 2.0).abs() < 1e-14);
    }

    #[test]
    fn grid_compatibility_and_box() {
        let states = StateGrid::line(3, 0.0, 1.0).unwrap();
        let err = ControlProblem::from_fns(
            states.clone(),
            1,
            1.0,
            labels(1),
            |_, _| [0.5, 0.0],
            |_, _, _| 0.0,
            InitialCondition::Free,
        );
        assert!(matches!(err, Err(ControlError::NotGridCompatible { .. })));
        let err = ControlProblem::from_fns(
            states,
            1,
            1.0,
            labels(1),
            |_, _| [1.0, 0.0],
            |_, _, _| 0.0,
            InitialCondition::Free,
        );
        assert_eq!(err, Err(ControlError::NoAdmissibleControl { state: 2 }));
    }

    #[test]
    fn lint_reports_duplicates() {
        let states = StateGrid::line(3, 0.0, 1.0).unwrap();
        let p = ControlProblem::from_fns(
            states,
            1,
            1.0,
            labels(2),
            |_, _| [0.0, 0.0],
            |_, _, a| if a == 0 { 2.0 } else { 1.0 },
            InitialCondition::Free,
        )
        .unwrap();
        let lint = p.lint();
        assert_eq!(lint.len(), 3);
        assert!(lint.iter().all(|d| d.kept == 1 && d.dropped == 0));
        let vf = solve_value_function(&p);
        assert_eq!(vf.argmin(0, 1), Some(1));
    }

    #[test]
    fn two_dimensional_states() {
        let states = StateGrid::new(2, [3, 3], [-1.0, -1.0], 1.0).unwrap();
        let moves = [[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]];
        let p = ControlProblem::from_fns(
            states,
            2,
            1.0,
            labels(5),
            |_, a| moves[a],
            |x, _, a| x[0] * x[0] + x[1] * x[1] + if a == 0 { 0.0 } else { 0.1 },
            InitialCondition::point(9, 0),
        )
        .unwrap();
        let vf = solve_value_function(&p);
        // corner (−1, −1): one move toward the centre, then stay: 2 + 0.1 + 1
        assert!((vf.value(0, 2) - 3.1).abs() < 1e-12);
        let sol = solve_relaxed_lp(&p).unwrap();
        assert!((sol.value - 3.1).abs() < 1e-12);
        assert_eq!(sol.boundary_contact.first(), Some(&0));
    }
}
