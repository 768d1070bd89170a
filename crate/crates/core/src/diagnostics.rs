//! Numerical checks of a solution and its certificate: energy conservation on the
//! projected support, slackness, the duality identity and a Lipschitz estimate
//! for the momentum map.

use alloc::vec::Vec;

use crate::certificate::DualCertificate;
use crate::convexify::{momentum_field, ConvexifyError, FiberEnvelope};
use crate::grid::{boundary_of_measure, DiscreteMeasure, GridError, LagrangianTable, PhaseGrid};
use crate::measure_lp::OptimalSolution;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Convexify(#[from] ConvexifyError),
    #[error("node {node} out of range ({node_count} nodes)")]
    NodeOutOfRange { node: usize, node_count: usize },
    #[error("{what} has length {got}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("inputs live on different grids")]
    GridMismatch,
}

/// `H(x, p) = max over edges out of x of p(e) − L(e)`; `p` follows `out_edges(x)` order.
pub fn discrete_hamiltonian(
    table: &LagrangianTable,
    x: usize,
    p: &[f64],
) -> Result<f64, DiagnosticsError> {
    let grid = table.grid();
    if x >= grid.node_count() {
        return Err(DiagnosticsError::NodeOutOfRange {
            node: x,
            node_count: grid.node_count(),
        });
    }
    let out = grid.out_edges(x);
    if p.len() != out.len() {
        return Err(DiagnosticsError::DimensionMismatch {
            what: "covector",
            expected: out.len(),
            got: p.len(),
        });
    }
    Ok(out
        .iter()
        .zip(p)
        .map(|(&e, pe)| pe - table.value(e))
        .fold(f64::NEG_INFINITY, f64::max))
}

/// `H(x, df_x) + c₀` at every node; nonpositive for a dual-feasible certificate.
pub fn hamiltonian_excess(
    table: &LagrangianTable,
    cert: &DualCertificate,
) -> Result<Vec<f64>, DiagnosticsError> {
    check_certificate(table, cert)?;
    let grid = table.grid();
    let df = cert.differential(table);
    (0..grid.node_count())
        .map(|x| {
            let p: Vec<f64> = grid.out_edges(x).iter().map(|&e| df[e]).collect();
            Ok(discrete_hamiltonian(table, x, &p)? + cert.critical_constant)
        })
        .collect()
}

fn check_certificate(table: &LagrangianTable, cert: &DualCertificate) -> Result<(), DiagnosticsError> {
    let grid = table.grid();
    if cert.potential.len() != grid.node_count() {
        return Err(DiagnosticsError::DimensionMismatch {
            what: "potential",
            expected: grid.node_count(),
            got: cert.potential.len(),
        });
    }
    if cert.slack.len() != grid.edge_count() {
        return Err(DiagnosticsError::DimensionMismatch {
            what: "slack",
            expected: grid.edge_count(),
            got: cert.slack.len(),
        });
    }
    Ok(())
}

/// Largest `|H(x, df_x) + c₀|` over the projected support of `mu`.
pub fn check_energy_conservation(
    table: &LagrangianTable,
    cert: &DualCertificate,
    mu: &DiscreteMeasure,
) -> Result<f64, DiagnosticsError> {
    if !table.grid().same_as(mu.grid()) {
        return Err(DiagnosticsError::GridMismatch);
    }
    let excess = hamiltonian_excess(table, cert)?;
    Ok(mu
        .projected_support()
        .into_iter()
        .fold(0.0f64, |m, x| m.max(excess[x].abs())))
}

/// Largest `|p(x) − p(y)|∞ / d(x, y)` over defined nodes outside `exclusion`,
/// with `d` the wraparound ℓ∞ distance on the torus.
pub fn estimate_momentum_lipschitz(
    momenta: &[Option<[f64; 2]>],
    grid: &PhaseGrid,
    exclusion: &[usize],
) -> Result<f64, DiagnosticsError> {
    let torus = grid.require_torus()?;
    if momenta.len() != grid.node_count() {
        return Err(DiagnosticsError::DimensionMismatch {
            what: "momentum table",
            expected: grid.node_count(),
            got: momenta.len(),
        });
    }
    let nodes: Vec<(usize, [f64; 2])> = momenta
        .iter()
        .enumerate()
        .filter(|(x, _)| !exclusion.contains(x))
        .filter_map(|(x, p)| p.map(|p| (x, p)))
        .collect();
    let dx = torus.spacing();
    let mut best = 0.0f64;
    for (i, &(x, p)) in nodes.iter().enumerate() {
        for &(y, q) in &nodes[i + 1..] {
            let d = torus.index_distance(x, y) as f64 * dx;
            let diff = (p[0] - q[0]).abs().max((p[1] - q[1]).abs());
            best = best.max(diff / d);
        }
    }
    Ok(best)
}

/// One row per node: potential, momentum (where defined) and `H + c₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeRow {
    pub node: usize,
    pub potential: f64,
    pub momentum: Option<[f64; 2]>,
    pub hamiltonian_excess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport {
    pub hamiltonian_residual_max: f64,
    pub slack_min: f64,
    pub slack_on_support_max: f64,
    pub duality_gap: f64,
    pub momentum_lipschitz_estimate: f64,
    pub boundary_residual_max: f64,
    /// `Σ μ·g`.
    pub complementary_slackness: f64,
    pub mass: f64,
    /// Nodes left out of the Lipschitz estimate.
    pub excluded_nodes: Vec<usize>,
    pub nodes: Vec<NodeRow>,
}

/// Runs every check on a solved and certified problem.
///
/// The Lipschitz estimate skips nodes carrying boundary charge and nodes whose
/// supported velocities all sit on the stencil's outer ring; it is 0 without an
/// envelope.
pub fn full_report(
    table: &LagrangianTable,
    solution: &OptimalSolution,
    cert: &DualCertificate,
    envelope: Option<&FiberEnvelope>,
) -> Result<DiagnosticsReport, DiagnosticsError> {
    let grid = table.grid();
    let mu = &solution.measure;
    if !grid.same_as(mu.grid()) || envelope.is_some_and(|env| !grid.same_as(env.grid())) {
        return Err(DiagnosticsError::GridMismatch);
    }
    check_certificate(table, cert)?;
    let current = solution.current();
    if !grid.same_as(current.grid()) {
        return Err(DiagnosticsError::GridMismatch);
    }

    let excess = hamiltonian_excess(table, cert)?;
    let hamiltonian_residual_max = mu
        .projected_support()
        .into_iter()
        .fold(0.0f64, |m, x| m.max(excess[x].abs()));

    let action = mu.integrate(table.values());
    let mass = mu.mass();
    let duality_gap = (action - (cert.critical_constant * mass + cert.pairing(&current))).abs();

    let boundary = boundary_of_measure(mu);
    let boundary_residual_max = boundary
        .charges()
        .iter()
        .zip(current.charges())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));

    let mut excluded_nodes = current.support();
    let (momenta, momentum_lipschitz_estimate) = match envelope {
        Some(env) => {
            let field = momentum_field(env, mu)?;
            excluded_nodes.extend(field.one_sided_nodes());
            excluded_nodes.sort_unstable();
            excluded_nodes.dedup();
            let reps = field.representatives();
            let est = estimate_momentum_lipschitz(&reps, grid, &excluded_nodes)?;
            (reps, est)
        }
        None => (alloc::vec![None; grid.node_count()], 0.0),
    };

    let nodes = (0..grid.node_count())
        .map(|x| NodeRow {
            node: x,
            potential: cert.potential[x],
            momentum: momenta[x],
            hamiltonian_excess: excess[x],
        })
        .collect();

    Ok(DiagnosticsReport {
        hamiltonian_residual_max,
        slack_min: cert.slack_min(),
        slack_on_support_max: cert.slack_on_support(mu),
        duality_gap,
        momentum_lipschitz_estimate,
        boundary_residual_max,
        complementary_slackness: cert.complementary_slackness(mu),
        mass,
        excluded_nodes,
        nodes,
    })
}
