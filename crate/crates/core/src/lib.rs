//! Discrete action minimization on finite phase spaces.
//!
//! The tangent bundle of a periodic grid is replaced by a stencil graph: every
//! edge `(x, k)` moves from node `x` to `x + k·Δx` in one time step `h`. On this
//! graph the action of a Lagrangian over closed (or boundary-constrained)
//! measures is a linear program whose solutions and dual certificates are
//! computed exactly by combinatorial algorithms:
//!
//! * [`grid`] builds the phase space, samples Lagrangians, and carries measures
//!   and boundary currents.
//! * [`measure_lp`] minimizes the action (minimum mean cycle for closed
//!   measures, min-cost flow for a prescribed boundary) and decomposes
//!   minimizers into cycles and paths.
//! * [`certificate`] extracts the decomposition `L = c₀ + df + g` with `g ≥ 0`
//!   and provides the Lax–Oleinik operators.
//! * [`convexify`] computes the fiberwise lower convex envelope and momenta.
//! * [`diagnostics`] checks energy conservation, slackness and regularity.
//! * [`control`] handles the finite-horizon control problem: value function,
//!   relaxed measure LP, certificate, HJB and Maximum Principle checks.
//!
//! The crate is `no_std` and only needs `alloc`.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod certificate;
pub mod control;
pub mod convexify;
pub mod diagnostics;
pub mod graph;
pub mod grid;
pub mod measure_lp;

pub use certificate::{
    certify_boundary, certify_closed, lax_oleinik_backward, lax_oleinik_forward,
    weak_kam_iterate, CertificateError, DualCertificate,
};
pub use control::{
    certify_control, check_u_v_relation, hjb_residual, maximum_principle_check,
    solve_relaxed_lp, solve_value_function, ControlCertificate, ControlError, ControlProblem,
    InitialCondition, RelaxedSolution, StateGrid, ValueFunction,
};
pub use convexify::{
    envelope_fiber_derivative, fiber_convex_envelope, momentum_field, ConvexifyError,
    FiberDerivative, FiberEnvelope, MomentumField,
};
pub use diagnostics::{
    check_energy_conservation, discrete_hamiltonian, estimate_momentum_lipschitz, full_report,
    DiagnosticsError, DiagnosticsReport,
};
pub use grid::{
    boundary_of_measure, build_torus_grid, discrete_differential, sample_lagrangian,
    BoundaryCurrent, DiscreteMeasure, GridError, LagrangianTable, PhaseGrid,
};
pub use measure_lp::{
    decompose, solve_boundary, solve_closed, Constraint, FlowDecomposition, MinimizationProblem,
    OptimalSolution, SolveError, Status, WeightedWalk,
};
