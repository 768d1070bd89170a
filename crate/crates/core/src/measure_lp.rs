//! Action minimization over closed and boundary-constrained measures.
//!
//! * Closed probability measures: the minimum of `Σ L·μ` is the minimum cycle
//!   mean of the edge-cost graph, attained by the uniform measure on a cycle.
//!   The value comes from Karp's recurrence; the cycle is read off the tight
//!   edges of the reduced costs.
//! * Prescribed boundary `∂μ = c`: a negative cycle makes the action unbounded
//!   below (circulations do not change the boundary); otherwise the problem is
//!   an uncapacitated min-cost flow with node supplies `−h·c(x)`.
//!
//! Ties between optimal cycles are broken by taking the lexicographically
//! smallest edge sequence (edge index order is `(node, offset)` order).

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::graph::{self, FlowOutcome, NegativeCycle};
use crate::grid::{BoundaryCurrent, DiscreteMeasure, GridError, LagrangianTable, PhaseGrid};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolveError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("boundary current and Lagrangian live on different grids")]
    GridMismatch,
    #[error("internal solver inconsistency: {0}")]
    Internal(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Unbounded,
    Infeasible,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Optimal => "OPTIMAL",
            Status::Unbounded => "UNBOUNDED",
            Status::Infeasible => "INFEASIBLE",
        }
    }
}

/// Feasible set: closed probability measures, or measures with a given boundary.
#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    Closed,
    Boundary(BoundaryCurrent),
}

/// A Lagrangian together with its feasible set.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimizationProblem {
    pub table: LagrangianTable,
    pub constraint: Constraint,
}

impl MinimizationProblem {
    pub fn closed(table: LagrangianTable) -> Self {
        Self {
            table,
            constraint: Constraint::Closed,
        }
    }

    pub fn with_boundary(table: LagrangianTable, current: BoundaryCurrent) -> Result<Self, SolveError> {
        if !table.grid().same_as(current.grid()) {
            return Err(SolveError::GridMismatch);
        }
        Ok(Self {
            table,
            constraint: Constraint::Boundary(current),
        })
    }

    /// Required total mass: 1 for closed measures, free otherwise.
    pub fn mass_normalization(&self) -> Option<f64> {
        match self.constraint {
            Constraint::Closed => Some(1.0),
            Constraint::Boundary(_) => None,
        }
    }

    pub fn solve(&self) -> Result<OptimalSolution, SolveError> {
        match &self.constraint {
            Constraint::Closed => solve_closed(&self.table),
            Constraint::Boundary(c) => solve_boundary(&self.table, c),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalSolution {
    pub constraint: Constraint,
    pub measure: DiscreteMeasure,
    /// `Σ L·μ`; `−∞` when unbounded, `+∞` when infeasible.
    pub value: f64,
    pub status: Status,
}

impl OptimalSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    /// The prescribed boundary (zero for closed problems).
    pub fn current(&self) -> BoundaryCurrent {
        match &self.constraint {
            Constraint::Closed => BoundaryCurrent::zero(self.measure.grid()),
            Constraint::Boundary(c) => c.clone(),
        }
    }
}

fn cost_scale(values: &[f64]) -> f64 {
    1.0 + values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Minimizes the action over closed probability measures.
pub fn solve_closed(table: &LagrangianTable) -> Result<OptimalSolution, SolveError> {
    let grid = table.grid();
    let costs = table.values();
    let Some(lambda) = graph::min_mean_cycle(grid.node_count(), grid.tails(), grid.heads(), costs)
    else {
        return Ok(OptimalSolution {
            constraint: Constraint::Closed,
            measure: DiscreteMeasure::zero(grid),
            value: f64::INFINITY,
            status: Status::Infeasible,
        });
    };

    let reduced: Vec<f64> = costs.iter().map(|c| c - lambda).collect();
    let scale = cost_scale(&reduced);
    let potentials = graph::bellman_ford(
        grid.node_count(),
        grid.tails(),
        grid.heads(),
        &reduced,
        &vec![0.0; grid.node_count()],
        1e-13 * scale,
    )
    .map_err(|NegativeCycle| SolveError::Internal("negative reduced cycle below the minimum mean"))?;

    let tight_tol = 1e-9 * scale;
    let tight: Vec<bool> = (0..grid.edge_count())
        .map(|e| {
            (reduced[e] + potentials[grid.tail(e)] - potentials[grid.head(e)]).abs() <= tight_tol
        })
        .collect();
    let cycle = smallest_tight_cycle(grid, &tight)
        .ok_or(SolveError::Internal("no cycle among tight edges"))?;

    let value = cycle.iter().map(|&e| costs[e]).sum::<f64>() / cycle.len() as f64;
    if (value - lambda).abs() > 1e-8 * scale {
        return Err(SolveError::Internal("extracted cycle does not attain the minimum mean"));
    }
    Ok(OptimalSolution {
        constraint: Constraint::Closed,
        measure: DiscreteMeasure::uniform_on(grid, &cycle)?,
        value,
        status: Status::Optimal,
    })
}

/// Lexicographically smallest simple cycle (as an edge sequence) in the subgraph of `tight` edges.
fn smallest_tight_cycle(grid: &PhaseGrid, tight: &[bool]) -> Option<Vec<usize>> {
    let n = grid.node_count();
    let mut out = vec![Vec::new(); n];
    for e in (0..grid.edge_count()).filter(|&e| tight[e]) {
        out[grid.tail(e)].push(e);
    }
    let comp = graph::strongly_connected_components(n, &out, grid.heads());
    let first = (0..grid.edge_count()).find(|&e| {
        tight[e] && (grid.tail(e) == grid.head(e) || comp[grid.tail(e)] == comp[grid.head(e)])
    })?;

    let start = grid.tail(first);
    let mut cycle = vec![first];
    let mut visited = vec![false; n];
    visited[start] = true;
    let mut cur = grid.head(first);
    let mut seen = vec![false; n];
    let mut queue = Vec::new();
    while cur != start {
        visited[cur] = true;
        let mut step = None;
        for &e in &out[cur] {
            let w = grid.head(e);
            if w == start || (!visited[w] && reaches(grid, &out, w, start, &visited, &mut seen, &mut queue)) {
                step = Some(e);
                break;
            }
        }
        let e = step?;
        cycle.push(e);
        cur = grid.head(e);
    }
    Some(cycle)
}

/// Whether `target` is reachable from `from` through unvisited nodes.
fn reaches(
    grid: &PhaseGrid,
    out: &[Vec<usize>],
    from: usize,
    target: usize,
    visited: &[bool],
    seen: &mut [bool],
    queue: &mut Vec<usize>,
) -> bool {
    seen.iter_mut().for_each(|s| *s = false);
    queue.clear();
    queue.push(from);
    seen[from] = true;
    while let Some(u) = queue.pop() {
        for &e in &out[u] {
            let w = grid.head(e);
            if w == target {
                return true;
            }
            if !visited[w] && !seen[w] {
                seen[w] = true;
                queue.push(w);
            }
        }
    }
    false
}

/// Minimizes the action over measures with boundary `current`.
pub fn solve_boundary(
    table: &LagrangianTable,
    current: &BoundaryCurrent,
) -> Result<OptimalSolution, SolveError> {
    let grid = table.grid();
    if !grid.same_as(current.grid()) {
        return Err(SolveError::GridMismatch);
    }
    let costs = table.values();
    let constraint = Constraint::Boundary(current.clone());
    let scale = cost_scale(costs);
    let n = grid.node_count();

    if graph::bellman_ford(n, grid.tails(), grid.heads(), costs, &vec![0.0; n], 1e-12 * scale).is_err() {
        return Ok(OptimalSolution {
            constraint,
            measure: DiscreteMeasure::zero(grid),
            value: f64::NEG_INFINITY,
            status: Status::Unbounded,
        });
    }

    let h = grid.time_step();
    let supply: Vec<f64> = current.charges().iter().map(|c| -h * c).collect();
    match graph::min_cost_flow(n, grid.tails(), grid.heads(), costs, &supply) {
        FlowOutcome::Infeasible { .. } => Ok(OptimalSolution {
            constraint,
            measure: DiscreteMeasure::zero(grid),
            value: f64::INFINITY,
            status: Status::Infeasible,
        }),
        FlowOutcome::Optimal { flow, .. } => {
            let total: f64 = supply.iter().filter(|&&s| s > 0.0).sum();
            let eps = 1e-13 * total.max(1.0);
            let measure = DiscreteMeasure::from_weights(
                grid,
                flow.iter().enumerate().filter(|(_, &f)| f > eps).map(|(e, &f)| (e, f)),
            )?;
            let value = measure.integrate(costs);
            Ok(OptimalSolution {
                constraint,
                measure,
                value,
                status: Status::Optimal,
            })
        }
    }
}

/// A closed walk (`nodes` starts and ends at the same node) or an open path.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedWalk {
    pub edges: Vec<usize>,
    pub nodes: Vec<usize>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowDecomposition {
    pub cycles: Vec<WeightedWalk>,
    pub paths: Vec<WeightedWalk>,
}

impl FlowDecomposition {
    /// Sums the weighted walks back into an edge measure.
    pub fn recompose(&self, grid: &PhaseGrid) -> Result<DiscreteMeasure, GridError> {
        DiscreteMeasure::from_weights(
            grid,
            self.cycles
                .iter()
                .chain(&self.paths)
                .flat_map(|w| w.edges.iter().map(move |&e| (e, w.weight))),
        )
    }
}

/// Splits `mu` into weighted simple cycles and source-to-sink paths.
pub fn decompose(mu: &DiscreteMeasure) -> FlowDecomposition {
    let grid = mu.grid();
    let n = grid.node_count();
    let mut w: BTreeMap<usize, f64> = mu.support().collect();
    let max_w = w.values().fold(0.0f64, |m, &v| m.max(v));
    let eps = 1e-12 * max_w.max(f64::MIN_POSITIVE);

    let mut excess = vec![0.0; n];
    for (&e, &x) in &w {
        excess[grid.tail(e)] += x;
        excess[grid.head(e)] -= x;
    }

    let mut cycles = Vec::new();
    let mut paths = Vec::new();
    let next_edge = |w: &BTreeMap<usize, f64>, x: usize| {
        grid.out_edges(x)
            .iter()
            .copied()
            .find(|e| w.get(e).is_some_and(|&v| v > eps))
    };
    let take = |w: &mut BTreeMap<usize, f64>, edges: &[usize], delta: f64| {
        for e in edges {
            let v = w.get_mut(e).expect("edge in support");
            *v -= delta;
            if *v <= eps {
                w.remove(e);
            }
        }
    };
    let bottleneck = |w: &BTreeMap<usize, f64>, edges: &[usize]| {
        edges.iter().map(|e| w[e]).fold(f64::INFINITY, f64::min)
    };

    let budget = 4 * (grid.edge_count() + n) + 16;
    let mut steps = 0;

    // paths from nodes with positive net outflow
    while let Some(src) = (0..n).find(|&x| excess[x] > eps) {
        steps += 1;
        if steps > budget {
            break;
        }
        let mut nodes = vec![src];
        let mut edges: Vec<usize> = Vec::new();
        let mut pos = vec![usize::MAX; n];
        pos[src] = 0;
        let mut cur = src;
        loop {
            if cur != src && excess[cur] < -eps {
                let delta = bottleneck(&w, &edges).min(excess[src]).min(-excess[cur]);
                take(&mut w, &edges, delta);
                excess[src] -= delta;
                excess[cur] += delta;
                paths.push(WeightedWalk {
                    edges,
                    nodes,
                    weight: delta,
                });
                break;
            }
            let Some(e) = next_edge(&w, cur) else {
                // rounding residue: nothing left to follow
                excess[src] = 0.0;
                break;
            };
            let next = grid.head(e);
            if pos[next] != usize::MAX {
                let at = pos[next];
                let mut cyc_edges: Vec<usize> = edges[at..].to_vec();
                cyc_edges.push(e);
                let mut cyc_nodes: Vec<usize> = nodes[at..].to_vec();
                cyc_nodes.push(next);
                let delta = bottleneck(&w, &cyc_edges);
                take(&mut w, &cyc_edges, delta);
                cycles.push(WeightedWalk {
                    edges: cyc_edges,
                    nodes: cyc_nodes,
                    weight: delta,
                });
                // restart this source with the cycle removed
                break;
            }
            pos[next] = nodes.len();
            nodes.push(next);
            edges.push(e);
            cur = next;
        }
    }

    // the remainder is a circulation
    while let Some((&first, _)) = w.iter().next() {
        steps += 1;
        if steps > budget {
            break;
        }
        let start = grid.tail(first);
        let mut nodes = vec![start];
        let mut edges = Vec::new();
        let mut pos = vec![usize::MAX; n];
        pos[start] = 0;
        let mut cur = start;
        loop {
            let Some(e) = next_edge(&w, cur) else {
                // unbalanced residue below tolerance
                for e in edges.iter().chain(core::iter::once(&first)) {
                    w.remove(e);
                }
                break;
            };
            let next = grid.head(e);
            if pos[next] != usize::MAX {
                let at = pos[next];
                let mut cyc_edges: Vec<usize> = edges[at..].to_vec();
                cyc_edges.push(e);
                let mut cyc_nodes: Vec<usize> = nodes[at..].to_vec();
                cyc_nodes.push(next);
                let delta = bottleneck(&w, &cyc_edges);
                take(&mut w, &cyc_edges, delta);
                cycles.push(WeightedWalk {
                    edges: cyc_edges,
                    nodes: cyc_nodes,
                    weight: delta,
                });
                break;
            }
            pos[next] = nodes.len();
            nodes.push(next);
            edges.push(e);
            cur = next;
        }
    }

    FlowDecomposition { cycles, paths }
}
