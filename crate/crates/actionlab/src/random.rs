//! Seeded random instances for the property suites.

use actionlab_core::{
    build_torus_grid, ControlProblem, InitialCondition, LagrangianTable, PhaseGrid, StateGrid,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type InstanceRng = ChaCha8Rng;

pub fn rng(seed: u64) -> InstanceRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Closed problem on a one-dimensional torus: `3 ≤ n ≤ max_n`, `K ∈ {1, 2}`,
/// `h = 1/n`, every edge cost uniform in `[−1, 1]`.
pub fn closed_instance(rng: &mut InstanceRng, max_n: usize) -> LagrangianTable {
    let n = rng.gen_range(3..=max_n.max(3));
    let k = rng.gen_range(1..=2usize).min(n / 2).max(1);
    let grid = build_torus_grid(1, n, k, 1.0 / n as f64).expect("valid torus");
    uniform_costs(rng, &grid)
}

/// Abstract network with `2 ≤ nodes ≤ max_nodes`, random simple edges (self-loops
/// allowed, no parallel edges), at least one cycle, costs uniform in `[−1, 1]`.
pub fn small_network(rng: &mut InstanceRng, max_nodes: usize) -> LagrangianTable {
    let n = rng.gen_range(2..=max_nodes.max(2));
    let density = rng.gen_range(0.15..0.6);
    let mut edges = Vec::new();
    for t in 0..n {
        for h in 0..n {
            if rng.gen_bool(density) {
                edges.push((t, h));
            }
        }
    }
    // guarantee a cycle: a loop when a == b, a 2-cycle otherwise
    let a = rng.gen_range(0..n);
    let b = rng.gen_range(0..n);
    for e in [(a, b), (b, a)] {
        if !edges.contains(&e) {
            edges.push(e);
        }
    }
    edges.sort_unstable();
    let grid = PhaseGrid::network(n, &edges, 1.0).expect("valid network");
    uniform_costs(rng, &grid)
}

fn uniform_costs(rng: &mut InstanceRng, grid: &PhaseGrid) -> LagrangianTable {
    let values = (0..grid.edge_count()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    LagrangianTable::from_values(grid, values).expect("finite costs")
}

/// One fiber: `1..=max_points` strictly increasing velocities with values in `[−2, 2]`.
pub fn fiber_1d(rng: &mut InstanceRng, max_points: usize) -> (Vec<f64>, Vec<f64>) {
    let m = rng.gen_range(1..=max_points.max(1));
    let mut vs: Vec<f64> = Vec::with_capacity(m);
    let mut v = rng.gen_range(-3.0..0.0);
    for _ in 0..m {
        vs.push(v);
        v += rng.gen_range(0.05..1.0);
    }
    let ls = (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect();
    (vs, ls)
}

/// A two-dimensional fiber: a random subset (3 to 9 points) of the 3×3 integer stencil.
pub fn fiber_2d(rng: &mut InstanceRng) -> (Vec<[f64; 2]>, Vec<f64>) {
    let mut pts: Vec<[f64; 2]> = (-1..=1)
        .flat_map(|i| (-1..=1).map(move |j| [i as f64, j as f64]))
        .collect();
    pts.shuffle(rng);
    let m = rng.gen_range(3..=9);
    pts.truncate(m);
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let ls = (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect();
    (pts, ls)
}

/// How the initial distribution of a random control problem is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialKind {
    /// Random probability weights on a random nonempty subset of states.
    Distribution,
    /// Unit mass at a random state.
    Point,
    Free,
}

/// Control problem with at most 9 states (a line or a small rectangle), 1 to 3
/// controls moving at most one cell per step, 1 to 5 steps and costs in `[−1, 1]`.
///
/// Every state keeps at least one admissible control.
pub fn control_problem(rng: &mut InstanceRng, initial: InitialKind) -> ControlProblem {
    loop {
        let states = if rng.gen_bool(0.7) {
            StateGrid::line(rng.gen_range(2..=9), 0.0, 0.5).expect("valid line")
        } else {
            let c0 = rng.gen_range(2..=3);
            let c1 = rng.gen_range(2..=3);
            StateGrid::new(2, [c0, c1], [0.0, 0.0], 0.5).expect("valid rectangle")
        };
        let d = states.dim();
        let ns = states.len();
        let na = rng.gen_range(1..=3);
        let steps = rng.gen_range(1..=5);
        let dt = 0.5;
        let controls: Vec<String> = (0..na).map(|a| format!("a{a}")).collect();
        let offsets: Vec<[i32; 2]> = (0..ns * na)
            .map(|_| {
                let mut k = [0i32; 2];
                for c in k.iter_mut().take(d) {
                    *c = rng.gen_range(-1..=1);
                }
                k
            })
            .collect();
        let costs: Vec<f64> = (0..steps * ns * na).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let init = match initial {
            InitialKind::Free => InitialCondition::Free,
            InitialKind::Point => InitialCondition::point(ns, rng.gen_range(0..ns)),
            InitialKind::Distribution => {
                let mut w: Vec<f64> = (0..ns)
                    .map(|_| if rng.gen_bool(0.5) { rng.gen_range(0.1..1.0) } else { 0.0 })
                    .collect();
                if w.iter().all(|&x| x == 0.0) {
                    w[rng.gen_range(0..ns)] = 1.0;
                }
                let total: f64 = w.iter().sum();
                w.iter_mut().for_each(|x| *x /= total);
                InitialCondition::Fixed(w)
            }
        };
        if let Ok(p) = ControlProblem::from_tables(states, steps, dt, controls, offsets, costs, init) {
            return p;
        }
    }
}
