//! Combinatorial kernels on edge-list digraphs.
//!
//! Graphs are passed as parallel slices `tails[e] → heads[e]` with `costs[e]`.
//! Everything here is exact combinatorics on floats: no LP numerics, only
//! additions and comparisons against an explicit tolerance.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

/// A negative cycle was found while computing shortest distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NegativeCycle;

/// Shortest-walk distances with per-node initial values.
///
/// `init[x]` is the cost of a virtual root arc into `x` (`f64::INFINITY` for
/// none). A relaxation only counts if it improves a distance by more than
/// `tol`, so cycles of weight `−tol` or more are treated as nonnegative.
/// Unreached nodes keep `f64::INFINITY`.
pub fn bellman_ford(
    node_count: usize,
    tails: &[usize],
    heads: &[usize],
    costs: &[f64],
    init: &[f64],
    tol: f64,
) -> Result<Vec<f64>, NegativeCycle> {
    let mut dist = init.to_vec();
    for _pass in 0..=node_count {
        let mut changed = false;
        for e in 0..tails.len() {
            let du = dist[tails[e]];
            if du == f64::INFINITY {
                continue;
            }
            let cand = du + costs[e];
            let v = heads[e];
            if cand < dist[v] - tol {
                dist[v] = cand;
                changed = true;
            }
        }
        if !changed {
            return Ok(dist);
        }
    }
    Err(NegativeCycle)
}

/// Strongly connected components (iterative Tarjan). Returns a component id
/// per node; ids are in reverse topological order of the condensation.
pub fn strongly_connected_components(node_count: usize, out: &[Vec<usize>], heads: &[usize]) -> Vec<usize> {
    const UNSET: usize = usize::MAX;
    let mut index = vec![UNSET; node_count];
    let mut low = vec![0usize; node_count];
    let mut on_stack = vec![false; node_count];
    let mut comp = vec![UNSET; node_count];
    let mut stack = Vec::new();
    let mut next_index = 0;
    let mut next_comp = 0;
    // (node, position in its out-edge list)
    let mut call: Vec<(usize, usize)> = Vec::new();

    for root in 0..node_count {
        if index[root] != UNSET {
            continue;
        }
        call.push((root, 0));
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if *pos < out[v].len() {
                let w = heads[out[v][*pos]];
                *pos += 1;
                if index[w] == UNSET {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    while let Some(w) = stack.pop() {
                        on_stack[w] = false;
                        comp[w] = next_comp;
                        if w == v {
                            break;
                        }
                    }
                    next_comp += 1;
                }
            }
        }
    }
    comp
}

/// Minimum cycle mean over the whole graph, by Karp's recurrence run on each
/// strongly connected component. `None` if the graph is acyclic.
///
/// Uses two sweeps of the walk-length recurrence so memory stays `O(V)`.
pub fn min_mean_cycle(
    node_count: usize,
    tails: &[usize],
    heads: &[usize],
    costs: &[f64],
) -> Option<f64> {
    let mut out = vec![Vec::new(); node_count];
    for (e, &t) in tails.iter().enumerate() {
        out[t].push(e);
    }
    let comp = strongly_connected_components(node_count, &out, heads);
    let comp_count = comp.iter().copied().max().map_or(0, |c| c + 1);

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); comp_count];
    for x in 0..node_count {
        members[comp[x]].push(x);
    }
    let mut local = vec![0usize; node_count];
    let mut best: Option<f64> = None;

    for nodes in &members {
        for (i, &x) in nodes.iter().enumerate() {
            local[x] = i;
        }
        let c = comp[nodes[0]];
        let edges: Vec<(usize, usize, f64)> = nodes
            .iter()
            .flat_map(|&x| out[x].iter())
            .filter(|&&e| comp[heads[e]] == c)
            .map(|&e| (local[tails[e]], local[heads[e]], costs[e]))
            .collect();
        if edges.is_empty() {
            continue;
        }
        let lambda = karp_component(nodes.len(), &edges);
        best = Some(best.map_or(lambda, |b: f64| b.min(lambda)));
    }
    best
}

fn karp_step(prev: &[f64], next: &mut [f64], edges: &[(usize, usize, f64)]) {
    next.iter_mut().for_each(|d| *d = f64::INFINITY);
    for &(u, v, c) in edges {
        if prev[u] < f64::INFINITY {
            let cand = prev[u] + c;
            if cand < next[v] {
                next[v] = cand;
            }
        }
    }
}

fn karp_component(m: usize, edges: &[(usize, usize, f64)]) -> f64 {
    let mut start = vec![f64::INFINITY; m];
    start[0] = 0.0;

    let mut prev = start.clone();
    let mut next = vec![0.0; m];
    for _ in 0..m {
        karp_step(&prev, &mut next, edges);
        core::mem::swap(&mut prev, &mut next);
    }
    let last = prev;

    let mut worst = vec![f64::NEG_INFINITY; m];
    let mut row = start;
    for k in 0..m {
        for v in 0..m {
            if last[v] < f64::INFINITY && row[v] < f64::INFINITY {
                let q = (last[v] - row[v]) / (m - k) as f64;
                if q > worst[v] {
                    worst[v] = q;
                }
            }
        }
        karp_step(&row, &mut next, edges);
        core::mem::swap(&mut row, &mut next);
    }
    (0..m)
        .filter(|&v| last[v] < f64::INFINITY)
        .map(|v| worst[v])
        .fold(f64::INFINITY, f64::min)
}

/// Result of [`min_cost_flow`].
#[derive(Debug, Clone, PartialEq)]
pub enum FlowOutcome {
    /// Per-edge flow and its total cost.
    Optimal { flow: Vec<f64>, cost: f64 },
    /// Not all supply can reach a demand node.
    Infeasible { routed: f64, required: f64 },
}

#[derive(Debug, Clone)]
struct Arc {
    to: usize,
    cap: f64,
    cost: f64,
    rev: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, then on node index
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Uncapacitated min-cost flow by successive shortest paths.
///
/// `supply[x]` is the required net outflow at `x` (negative for demand) and
/// must sum to zero. The caller guarantees there is no negative cycle; initial
/// potentials come from Bellman–Ford, later ones from Dijkstra on reduced costs.
pub fn min_cost_flow(
    node_count: usize,
    tails: &[usize],
    heads: &[usize],
    costs: &[f64],
    supply: &[f64],
) -> FlowOutcome {
    let source = node_count;
    let sink = node_count + 1;
    let total_nodes = node_count + 2;
    let required: f64 = supply.iter().filter(|&&s| s > 0.0).sum();
    let eps = 1e-12 * required.max(1.0);

    let mut adj: Vec<Vec<Arc>> = vec![Vec::new(); total_nodes];
    let mut edge_arc = Vec::with_capacity(tails.len());
    let add_arc = |adj: &mut Vec<Vec<Arc>>, u: usize, v: usize, cap: f64, cost: f64| -> (usize, usize) {
        let iu = adj[u].len();
        let iv = adj[v].len() + usize::from(u == v);
        adj[u].push(Arc { to: v, cap, cost, rev: iv });
        adj[v].push(Arc { to: u, cap: 0.0, cost: -cost, rev: iu });
        (u, iu)
    };
    for e in 0..tails.len() {
        edge_arc.push(add_arc(&mut adj, tails[e], heads[e], f64::INFINITY, costs[e]));
    }
    for (x, &s) in supply.iter().enumerate() {
        if s > eps {
            add_arc(&mut adj, source, x, s, 0.0);
        } else if s < -eps {
            add_arc(&mut adj, x, sink, -s, 0.0);
        }
    }

    // initial potentials over arcs with residual capacity
    let (mut at, mut ah, mut ac) = (Vec::new(), Vec::new(), Vec::new());
    for (u, arcs) in adj.iter().enumerate() {
        for a in arcs {
            if a.cap > eps {
                at.push(u);
                ah.push(a.to);
                ac.push(a.cost);
            }
        }
    }
    let mut init = vec![f64::INFINITY; total_nodes];
    init[source] = 0.0;
    let mut pot = match bellman_ford(total_nodes, &at, &ah, &ac, &init, 0.0) {
        Ok(d) => d,
        // callers check for negative cycles first; treat as no route
        Err(NegativeCycle) => return FlowOutcome::Infeasible { routed: 0.0, required },
    };

    let mut routed = 0.0;
    let mut dist = vec![f64::INFINITY; total_nodes];
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; total_nodes];
    while routed < required - eps {
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        parent.iter_mut().for_each(|p| *p = None);
        dist[source] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push(Entry(0.0, source));
        while let Some(Entry(d, u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for (i, a) in adj[u].iter().enumerate() {
                if a.cap <= eps || pot[a.to] == f64::INFINITY {
                    continue;
                }
                let reduced = (a.cost + pot[u] - pot[a.to]).max(0.0);
                let cand = d + reduced;
                if cand < dist[a.to] {
                    dist[a.to] = cand;
                    parent[a.to] = Some((u, i));
                    heap.push(Entry(cand, a.to));
                }
            }
        }
        if dist[sink] == f64::INFINITY {
            break;
        }
        for v in 0..total_nodes {
            if dist[v] < f64::INFINITY {
                pot[v] += dist[v];
            }
        }
        let mut delta = f64::INFINITY;
        let mut v = sink;
        while let Some((u, i)) = parent[v] {
            delta = delta.min(adj[u][i].cap);
            v = u;
        }
        delta = delta.min(required - routed);
        let mut v = sink;
        while let Some((u, i)) = parent[v] {
            let rev = adj[u][i].rev;
            adj[u][i].cap -= delta;
            if adj[u][i].cap < eps {
                adj[u][i].cap = 0.0;
            }
            adj[v][rev].cap += delta;
            v = u;
        }
        routed += delta;
    }

    if routed < required - eps * (1 + node_count) as f64 {
        return FlowOutcome::Infeasible { routed, required };
    }
    let flow: Vec<f64> = edge_arc
        .iter()
        .map(|&(u, i)| {
            let a = &adj[u][i];
            adj[a.to][a.rev].cap
        })
        .collect();
    let cost = flow.iter().zip(costs).map(|(f, c)| f * c).sum();
    FlowOutcome::Optimal { flow, cost }
}
