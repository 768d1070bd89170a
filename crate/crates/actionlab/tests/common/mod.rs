//! Independent reference computations used by the integration tests.
#![allow(dead_code)]

use actionlab_core::{ControlProblem, InitialCondition, LagrangianTable, PhaseGrid};

pub fn edges(grid: &PhaseGrid) -> Vec<(usize, usize)> {
    (0..grid.edge_count()).map(|e| (grid.tail(e), grid.head(e))).collect()
}

/// Minimum mean weight over all simple cycles, by exhaustive depth-first enumeration.
pub fn brute_force_min_cycle_mean(n: usize, edges: &[(usize, usize)], w: &[f64]) -> Option<f64> {
    let mut adj = vec![Vec::new(); n];
    for (e, &(t, h)) in edges.iter().enumerate() {
        adj[t].push((h, e));
    }
    let mut best: Option<f64> = None;
    // cycles are enumerated once per choice of smallest node
    for start in 0..n {
        let mut on_path = vec![false; n];
        on_path[start] = true;
        let mut stack: Vec<(usize, usize, f64, usize)> = vec![(start, 0, 0.0, 0)];
        while let Some(&mut (x, ref mut next, sum, len)) = stack.last_mut() {
            if *next == adj[x].len() {
                on_path[x] = false;
                stack.pop();
                continue;
            }
            let (y, e) = adj[x][*next];
            *next += 1;
            let total = sum + w[e];
            if y == start {
                let mean = total / (len + 1) as f64;
                best = Some(best.map_or(mean, |b: f64| b.min(mean)));
            } else if y > start && !on_path[y] {
                on_path[y] = true;
                stack.push((y, 0, total, len + 1));
            }
        }
    }
    best
}

/// Karp's theorem evaluated from the full walk table `D_k(v)` (all walks start
/// with weight 0 anywhere).
pub fn karp_table(n: usize, edges: &[(usize, usize)], w: &[f64]) -> Option<f64> {
    let inf = f64::INFINITY;
    let mut d = vec![vec![inf; n]; n + 1];
    d[0] = vec![0.0; n];
    for k in 1..=n {
        for (e, &(t, h)) in edges.iter().enumerate() {
            if d[k - 1][t] < inf {
                d[k][h] = d[k][h].min(d[k - 1][t] + w[e]);
            }
        }
    }
    let mut best: Option<f64> = None;
    for v in 0..n {
        let last = d[n][v];
        if last == inf {
            continue;
        }
        let worst = d[..n]
            .iter()
            .enumerate()
            .filter(|(_, row)| row[v] < inf)
            .map(|(k, row)| (last - row[v]) / (n - k) as f64)
            .fold(f64::NEG_INFINITY, f64::max);
        best = Some(best.map_or(worst, |b: f64| b.min(worst)));
    }
    best
}

/// All-pairs shortest path lengths.
pub fn floyd_warshall(n: usize, edges: &[(usize, usize)], w: &[f64]) -> Vec<Vec<f64>> {
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (x, row) in d.iter_mut().enumerate() {
        row[x] = 0.0;
    }
    for (e, &(t, h)) in edges.iter().enumerate() {
        d[t][h] = d[t][h].min(w[e]);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

/// Lower convex envelope at each sample as the largest affine minorant through two samples.
pub fn affine_minorant_envelope(vs: &[f64], ls: &[f64]) -> Vec<f64> {
    let m = vs.len();
    if m == 1 {
        return ls.to_vec();
    }
    let mut best = vec![f64::NEG_INFINITY; m];
    for i in 0..m {
        for j in i + 1..m {
            let slope = (ls[j] - ls[i]) / (vs[j] - vs[i]);
            let line = |v: f64| ls[i] + slope * (v - vs[i]);
            let minorant = (0..m).all(|k| line(vs[k]) <= ls[k] + 1e-12);
            if minorant {
                for k in 0..m {
                    best[k] = best[k].max(line(vs[k]).min(ls[k]));
                }
            }
        }
    }
    best
}

/// Two-dimensional envelope at each sample as the cheapest convex combination
/// of at most three samples (Carathéodory).
pub fn caratheodory_envelope(vs: &[[f64; 2]], ls: &[f64]) -> Vec<f64> {
    let m = vs.len();
    let mut best = ls.to_vec();
    for (k, target) in vs.iter().enumerate() {
        for i in 0..m {
            for j in i + 1..m {
                // segment through i and j
                if let Some(t) = on_segment(vs[i], vs[j], *target) {
                    best[k] = best[k].min((1.0 - t) * ls[i] + t * ls[j]);
                }
                for l in j + 1..m {
                    if let Some([a, b, c]) = barycentric(vs[i], vs[j], vs[l], *target) {
                        best[k] = best[k].min(a * ls[i] + b * ls[j] + c * ls[l]);
                    }
                }
            }
        }
    }
    best
}

fn on_segment(p: [f64; 2], q: [f64; 2], x: [f64; 2]) -> Option<f64> {
    let d = [q[0] - p[0], q[1] - p[1]];
    let r = [x[0] - p[0], x[1] - p[1]];
    let cross = d[0] * r[1] - d[1] * r[0];
    let len2 = d[0] * d[0] + d[1] * d[1];
    if cross.abs() > 1e-12 || len2 == 0.0 {
        return None;
    }
    let t = (d[0] * r[0] + d[1] * r[1]) / len2;
    (-1e-12..=1.0 + 1e-12).contains(&t).then_some(t.clamp(0.0, 1.0))
}

fn barycentric(p: [f64; 2], q: [f64; 2], r: [f64; 2], x: [f64; 2]) -> Option<[f64; 3]> {
    let det = (q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]);
    if det.abs() < 1e-12 {
        return None;
    }
    let b = ((x[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (x[1] - p[1])) / det;
    let c = ((q[0] - p[0]) * (x[1] - p[1]) - (x[0] - p[0]) * (q[1] - p[1])) / det;
    let a = 1.0 - b - c;
    let ok = [a, b, c].iter().all(|&t| t >= -1e-12);
    ok.then_some([a, b, c])
}

/// Optimal cost from every state by enumerating all control sequences.
pub fn exhaustive_control_values(p: &ControlProblem) -> Vec<f64> {
    let ns = p.states().len();
    let na = p.controls().len();
    let steps = p.steps();
    let total = na.pow(steps as u32);
    let mut best = vec![f64::INFINITY; ns];
    for (x0, slot) in best.iter_mut().enumerate() {
        'seq: for code in 0..total {
            let mut c = code;
            let mut x = x0;
            let mut cost = 0.0;
            for k in 0..steps {
                let a = c % na;
                c /= na;
                let Some(y) = p.next_state(x, a) else { continue 'seq };
                cost += p.dt() * p.cost(x, k, a);
                x = y;
            }
            *slot = slot.min(cost);
        }
    }
    best
}

/// Problem value for the problem's own initial condition from per-state values.
pub fn initial_value(p: &ControlProblem, values: &[f64]) -> f64 {
    match p.initial() {
        InitialCondition::Free => values.iter().cloned().fold(f64::INFINITY, f64::min),
        InitialCondition::Fixed(w) => w
            .iter()
            .zip(values)
            .filter(|(wx, _)| **wx > 0.0)
            .map(|(wx, v)| wx * v)
            .sum(),
    }
}

/// Largest ℓ∞ difference quotient over all pairs of defined, non-excluded nodes.
pub fn pairwise_lipschitz(grid: &PhaseGrid, momenta: &[Option<[f64; 2]>], exclusion: &[usize]) -> f64 {
    let t = grid.torus().expect("torus");
    let dx = t.spacing();
    let nodes: Vec<(usize, [f64; 2])> = momenta
        .iter()
        .enumerate()
        .filter(|(x, _)| !exclusion.contains(x))
        .filter_map(|(x, p)| p.map(|p| (x, p)))
        .collect();
    let mut best = 0.0f64;
    for (i, &(x, p)) in nodes.iter().enumerate() {
        for &(y, q) in &nodes[i + 1..] {
            let diff = (p[0] - q[0]).abs().max((p[1] - q[1]).abs());
            let (a, b) = (t.node_coords(x), t.node_coords(y));
            let n = t.nodes_per_dim();
            let steps = (0..t.dim())
                .map(|i| {
                    let d = a[i].abs_diff(b[i]);
                    d.min(n - d)
                })
                .max()
                .unwrap();
            let dist = steps as f64 * dx;
            best = best.max(diff / dist);
        }
    }
    best
}

/// Largest `|x − y|` over two equally long slices.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn table_edges(table: &LagrangianTable) -> Vec<(usize, usize)> {
    edges(table.grid())
}
