//! Dual certificates `L = c₀ + df + g` with `g ≥ 0` and the Lax–Oleinik operators.
//!
//! Potentials come from shortest walks for the reduced costs `L − c₀`: with
//! `φ` a Bellman–Ford potential, `f = h·φ` satisfies `(f(head) − f(tail))/h ≤ L − c₀`
//! on every edge, and the slack `g` is defined by the identity. On the support of
//! an optimal measure the slack vanishes.

use alloc::vec;
use alloc::vec::Vec;

use crate::graph::{self, NegativeCycle};
use crate::grid::{discrete_differential, BoundaryCurrent, DiscreteMeasure, LagrangianTable};
use crate::measure_lp::{Constraint, OptimalSolution, Status};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CertificateError {
    #[error("solution is not optimal (status {})", .0.as_str())]
    NotOptimal(Status),
    #[error("solution was computed for a different constraint")]
    WrongConstraint,
    #[error("inputs live on different grids")]
    GridMismatch,
    #[error("reduced costs admit a negative cycle")]
    NegativeReducedCycle,
    #[error("flow is not optimal: its residual graph has a negative cycle")]
    ResidualNegativeCycle,
    #[error("potential iteration did not stabilize after {iterations} iterations")]
    NonConverged { iterations: usize },
    #[error("potential has {got} entries, grid has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
}

/// `L = c₀ + df + g` on every edge.
#[derive(Debug, Clone, PartialEq)]
pub struct DualCertificate {
    pub critical_constant: f64,
    pub potential: Vec<f64>,
    pub slack: Vec<f64>,
    pub normalization_node: usize,
}

impl DualCertificate {
    /// Builds the certificate of a given potential; the slack is `L − c₀ − df`.
    pub fn from_potential(
        table: &LagrangianTable,
        potential: Vec<f64>,
        critical_constant: f64,
        normalization_node: usize,
    ) -> Result<Self, CertificateError> {
        let grid = table.grid();
        if potential.len() != grid.node_count() {
            return Err(CertificateError::LengthMismatch {
                expected: grid.node_count(),
                got: potential.len(),
            });
        }
        let df = discrete_differential(&potential, grid);
        let slack = table
            .values()
            .iter()
            .zip(&df)
            .map(|(l, d)| l - critical_constant - d)
            .collect();
        Ok(Self {
            critical_constant,
            potential,
            slack,
            normalization_node,
        })
    }

    /// Adds `a` to the potential. The slack is unchanged.
    pub fn shifted(&self, a: f64) -> Self {
        Self {
            potential: self.potential.iter().map(|f| f + a).collect(),
            ..self.clone()
        }
    }

    pub fn slack_min(&self) -> f64 {
        self.slack.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `max(0, −min g)`.
    pub fn max_negative_slack(&self) -> f64 {
        (-self.slack_min()).max(0.0)
    }

    /// Largest `|g|` over the support of `mu` (0 for the zero measure).
    pub fn slack_on_support(&self, mu: &DiscreteMeasure) -> f64 {
        mu.support().fold(0.0f64, |m, (e, _)| m.max(self.slack[e].abs()))
    }

    /// `Σ μ(e)·g(e)`.
    pub fn complementary_slackness(&self, mu: &DiscreteMeasure) -> f64 {
        mu.integrate(&self.slack)
    }

    /// `⟨c, f⟩ = Σ c(x)·f(x)`.
    pub fn pairing(&self, current: &BoundaryCurrent) -> f64 {
        current.pair(&self.potential)
    }

    pub fn differential(&self, table: &LagrangianTable) -> Vec<f64> {
        discrete_differential(&self.potential, table.grid())
    }

    /// Whether `T_backward[f] ≥ f` node-wise up to `tol`.
    pub fn is_subsolution(&self, table: &LagrangianTable, tol: f64) -> bool {
        lax_oleinik_backward(&self.potential, table, self.critical_constant)
            .iter()
            .zip(&self.potential)
            .all(|(t, f)| *t >= f - tol)
    }
}

fn reduced_scale(table: &LagrangianTable, c0: f64) -> f64 {
    1.0 + table.values().iter().fold(0.0f64, |m, l| m.max((l - c0).abs()))
}

fn normalization_node(mu: &DiscreteMeasure) -> usize {
    mu.projected_support().first().copied().unwrap_or(0)
}

fn normalize(potential: &mut [f64], node: usize) {
    let base = potential[node];
    potential.iter_mut().for_each(|f| *f -= base);
}

fn check_solution(table: &LagrangianTable, solution: &OptimalSolution) -> Result<(), CertificateError> {
    if !table.grid().same_as(solution.measure.grid()) {
        return Err(CertificateError::GridMismatch);
    }
    if solution.status != Status::Optimal {
        return Err(CertificateError::NotOptimal(solution.status));
    }
    Ok(())
}

/// Certificate for a closed minimizer: `c₀` is the optimal value.
pub fn certify_closed(
    table: &LagrangianTable,
    solution: &OptimalSolution,
) -> Result<DualCertificate, CertificateError> {
    check_solution(table, solution)?;
    if solution.constraint != Constraint::Closed {
        return Err(CertificateError::WrongConstraint);
    }
    let grid = table.grid();
    let c0 = solution.value;
    let reduced: Vec<f64> = table.values().iter().map(|l| l - c0).collect();
    let phi = graph::bellman_ford(
        grid.node_count(),
        grid.tails(),
        grid.heads(),
        &reduced,
        &vec![0.0; grid.node_count()],
        1e-13 * reduced_scale(table, c0),
    )
    .map_err(|NegativeCycle| CertificateError::NegativeReducedCycle)?;

    let h = grid.time_step();
    let norm = normalization_node(&solution.measure);
    let mut f: Vec<f64> = phi.iter().map(|p| h * p).collect();
    normalize(&mut f, norm);
    DualCertificate::from_potential(table, f, c0, norm)
}

/// Certificate for a minimizer with prescribed boundary, in the form `c₀ = 0`, `L ≥ df`.
///
/// Potentials are shortest distances in the residual graph of the optimal flow,
/// measured from the nodes where mass enters. Nodes those sources cannot reach
/// get a constant offset large enough to keep every edge feasible.
pub fn certify_boundary(
    table: &LagrangianTable,
    current: &BoundaryCurrent,
    solution: &OptimalSolution,
) -> Result<DualCertificate, CertificateError> {
    check_solution(table, solution)?;
    match &solution.constraint {
        Constraint::Boundary(c) if c == current => {}
        _ => return Err(CertificateError::WrongConstraint),
    }
    let grid = table.grid();
    let n = grid.node_count();
    let costs = table.values();
    let scale = reduced_scale(table, 0.0);
    let eps = 1e-13 * solution.measure.mass().max(1.0);

    let mut tails = grid.tails().to_vec();
    let mut heads = grid.heads().to_vec();
    let mut arc_costs = costs.to_vec();
    for (e, w) in solution.measure.support() {
        if w > eps {
            tails.push(grid.head(e));
            heads.push(grid.tail(e));
            arc_costs.push(-costs[e]);
        }
    }

    let init: Vec<f64> = current
        .charges()
        .iter()
        .map(|&c| if c < 0.0 { 0.0 } else { f64::INFINITY })
        .collect();
    let mut phi = graph::bellman_ford(n, &tails, &heads, &arc_costs, &init, 1e-13 * scale)
        .map_err(|NegativeCycle| CertificateError::ResidualNegativeCycle)?;

    let unreached: Vec<usize> = (0..n).filter(|&x| phi[x] == f64::INFINITY).collect();
    if !unreached.is_empty() {
        let mut local = vec![usize::MAX; n];
        for (i, &x) in unreached.iter().enumerate() {
            local[x] = i;
        }
        let (mut sub_t, mut sub_h, mut sub_c) = (Vec::new(), Vec::new(), Vec::new());
        for a in 0..tails.len() {
            if local[tails[a]] != usize::MAX && local[heads[a]] != usize::MAX {
                sub_t.push(local[tails[a]]);
                sub_h.push(local[heads[a]]);
                sub_c.push(arc_costs[a]);
            }
        }
        let psi = graph::bellman_ford(
            unreached.len(),
            &sub_t,
            &sub_h,
            &sub_c,
            &vec![0.0; unreached.len()],
            1e-13 * scale,
        )
        .map_err(|NegativeCycle| CertificateError::ResidualNegativeCycle)?;
        // only unreached -> reached arcs cross the cut
        let mut offset = 0.0f64;
        let mut any = false;
        for a in 0..tails.len() {
            let (u, r) = (tails[a], heads[a]);
            if local[u] != usize::MAX && local[r] == usize::MAX {
                let need = phi[r] - arc_costs[a] - psi[local[u]];
                offset = if any { offset.max(need) } else { need };
                any = true;
            }
        }
        for (i, &x) in unreached.iter().enumerate() {
            phi[x] = offset + psi[i];
        }
    }

    let h = grid.time_step();
    let norm = normalization_node(&solution.measure);
    let mut f: Vec<f64> = phi.iter().map(|p| h * p).collect();
    normalize(&mut f, norm);
    DualCertificate::from_potential(table, f, 0.0, norm)
}

/// One backward step: `T[f](x) = min over edges into x of f(tail) + h·(L − c₀)`.
pub fn lax_oleinik_backward(f0: &[f64], table: &LagrangianTable, c0: f64) -> Vec<f64> {
    let grid = table.grid();
    assert_eq!(f0.len(), grid.node_count(), "potential length");
    let h = grid.time_step();
    let l = table.values();
    (0..grid.node_count())
        .map(|x| {
            grid.in_edges(x)
                .iter()
                .map(|&e| f0[grid.tail(e)] + h * (l[e] - c0))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// One forward step: `max over edges out of x of f(head) − h·(L − c₀)`.
pub fn lax_oleinik_forward(f0: &[f64], table: &LagrangianTable, c0: f64) -> Vec<f64> {
    let grid = table.grid();
    assert_eq!(f0.len(), grid.node_count(), "potential length");
    let h = grid.time_step();
    let l = table.values();
    (0..grid.node_count())
        .map(|x| {
            grid.out_edges(x)
                .iter()
                .map(|&e| f0[grid.head(e)] - h * (l[e] - c0))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// Iterates `f ← min(f, T_backward[f])` from `f ≡ 0` until nothing changes.
///
/// Without negative reduced cycles the iteration is Bellman–Ford in disguise and
/// stops within `node_count` iterations; otherwise it runs out of `max_iters`.
pub fn weak_kam_iterate(
    table: &LagrangianTable,
    c0: f64,
    max_iters: usize,
) -> Result<Vec<f64>, CertificateError> {
    let grid = table.grid();
    let tol = 1e-12 * grid.time_step() * reduced_scale(table, c0);
    let mut f = vec![0.0; grid.node_count()];
    for _ in 0..max_iters {
        let t = lax_oleinik_backward(&f, table, c0);
        let mut changed = false;
        for (fx, tx) in f.iter_mut().zip(t) {
            if tx < *fx - tol {
                *fx = tx;
                changed = true;
            }
        }
        if !changed {
            return Ok(f);
        }
    }
    Err(CertificateError::NonConverged {
        iterations: max_iters,
    })
}
