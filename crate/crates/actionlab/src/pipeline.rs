//! solve → certify → convexify → diagnostics, and the control counterpart.

use std::path::Path;

use actionlab_core::{
    certify_boundary, certify_closed, certify_control, check_u_v_relation, fiber_convex_envelope,
    full_report, hjb_residual, maximum_principle_check, momentum_field, solve_boundary, solve_closed,
    solve_relaxed_lp, solve_value_function, BoundaryCurrent, CertificateError, ControlCertificate,
    ControlError, ControlProblem, ConvexifyError, DiagnosticsError, DiagnosticsReport, DualCertificate,
    FiberEnvelope, InitialCondition, LagrangianTable, MomentumField, OptimalSolution, RelaxedSolution,
    SolveError, Status, ValueFunction,
};
use serde::Serialize;

use crate::formats::{self, CertificateSummary, ControlSpec, DiagnosticsSummary, FormatError, GridSpec, SolutionSummary};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("solve: {0}")]
    Solve(#[from] SolveError),
    #[error("solver returned {}", .0.as_str())]
    NotOptimal(Status),
    #[error("certify: {0}")]
    Certificate(#[from] CertificateError),
    #[error("convexify: {0}")]
    Convexify(#[from] ConvexifyError),
    #[error("diagnostics: {0}")]
    Diagnostics(#[from] DiagnosticsError),
    #[error("control: {0}")]
    Control(#[from] ControlError),
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// Everything computed for one action problem.
#[derive(Debug, Clone)]
pub struct ActionRun {
    pub table: LagrangianTable,
    pub current: Option<BoundaryCurrent>,
    pub solution: OptimalSolution,
    pub certificate: DualCertificate,
    /// `None` on abstract networks.
    pub envelope: Option<FiberEnvelope>,
    pub momenta: Option<MomentumField>,
    pub report: DiagnosticsReport,
}

/// Solves, certifies and diagnoses; `current = None` is the closed problem.
pub fn run_action(table: &LagrangianTable, current: Option<&BoundaryCurrent>) -> Result<ActionRun, PipelineError> {
    let solution = match current {
        None => solve_closed(table)?,
        Some(c) => solve_boundary(table, c)?,
    };
    certify_solution(table, current, solution)
}

/// The part of [`run_action`] after the solve, for externally supplied solutions.
pub fn certify_solution(
    table: &LagrangianTable,
    current: Option<&BoundaryCurrent>,
    solution: OptimalSolution,
) -> Result<ActionRun, PipelineError> {
    if solution.status != Status::Optimal {
        return Err(PipelineError::NotOptimal(solution.status));
    }
    let certificate = match current {
        None => certify_closed(table, &solution)?,
        Some(c) => certify_boundary(table, c, &solution)?,
    };
    let envelope = match table.grid().torus() {
        Some(_) => Some(fiber_convex_envelope(table)?),
        None => None,
    };
    let momenta = match &envelope {
        Some(env) => Some(momentum_field(env, &solution.measure)?),
        None => None,
    };
    let report = full_report(table, &solution, &certificate, envelope.as_ref())?;
    Ok(ActionRun {
        table: table.clone(),
        current: current.cloned(),
        solution,
        certificate,
        envelope,
        momenta,
        report,
    })
}

impl ActionRun {
    pub fn c0(&self) -> f64 {
        self.certificate.critical_constant
    }

    /// Writes problem, solution, certificate and diagnostics files into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), FormatError> {
        let grid = self.table.grid();
        formats::write_json(&dir.join("grid.json"), &GridSpec::of(grid)?)?;
        formats::write_lagrangian_csv(formats::create(&dir.join("lagrangian.csv"))?, &self.table)?;
        if let Some(c) = &self.current {
            formats::write_current_csv(formats::create(&dir.join("current.csv"))?, c)?;
        }
        formats::write_measure_csv(formats::create(&dir.join("solution.csv"))?, &self.solution.measure)?;
        formats::write_json(&dir.join("solution.json"), &SolutionSummary::of(&self.solution))?;
        formats::write_json(
            &dir.join("certificate.json"),
            &CertificateSummary::of(&self.certificate, &self.solution.measure),
        )?;
        formats::write_slack_csv(
            formats::create(&dir.join("slack.csv"))?,
            &self.table,
            &self.certificate,
            &self.solution.measure,
        )?;
        if let Some(env) = &self.envelope {
            formats::write_envelope_csv(formats::create(&dir.join("envelope.csv"))?, env)?;
        }
        formats::write_json(&dir.join("diagnostics.json"), &DiagnosticsSummary::from(&self.report))?;
        let dim = grid.torus().map_or(1, |t| t.dim());
        formats::write_nodes_csv(formats::create(&dir.join("nodes.csv"))?, &self.report, dim)?;
        Ok(())
    }
}

/// Everything computed for one control problem.
#[derive(Debug, Clone)]
pub struct ControlRun {
    pub problem: ControlProblem,
    pub value_function: ValueFunction,
    pub relaxed: RelaxedSolution,
    /// Value of the dynamic program for the problem's initial condition.
    pub dp_value: f64,
    /// `None` when supported initial states have different optimal values.
    pub certificate: Option<ControlCertificate>,
    /// `(max |w| on the support, min w off the support)`.
    pub maximum_principle: Option<(f64, f64)>,
    /// Largest u/v relation residual over the supported trajectories.
    pub u_v_residual: Option<f64>,
    pub hjb_residual: f64,
}

/// DP value of `p` for its own initial condition.
pub fn dp_value(p: &ControlProblem, vf: &ValueFunction) -> f64 {
    let t = p.steps();
    match p.initial() {
        InitialCondition::Free => (0..vf.states()).map(|x| vf.value(x, t)).fold(f64::INFINITY, f64::min),
        InitialCondition::Fixed(w) => w
            .iter()
            .enumerate()
            .filter(|(_, &wx)| wx > 0.0)
            .map(|(x, wx)| wx * vf.value(x, t))
            .sum(),
    }
}

pub fn run_control(p: &ControlProblem) -> Result<ControlRun, PipelineError> {
    let vf = solve_value_function(p);
    let relaxed = solve_relaxed_lp(p)?;
    if relaxed.status != Status::Optimal {
        return Err(PipelineError::NotOptimal(relaxed.status));
    }
    let certificate = match certify_control(p, &relaxed) {
        Ok(c) => Some(c),
        Err(ControlError::MixedInitialValues { low, high }) => {
            log::info!("no certificate: supported initial values range over [{low}, {high}]");
            None
        }
        Err(e) => return Err(e.into()),
    };
    let maximum_principle = certificate.as_ref().map(|c| maximum_principle_check(c, &relaxed));
    let u_v_residual = match &certificate {
        Some(c) => {
            let mut worst = 0.0f64;
            for (path, _) in relaxed.trajectories(p) {
                worst = worst.max(check_u_v_relation(p, c, &vf, &path)?);
            }
            Some(worst)
        }
        None => None,
    };
    Ok(ControlRun {
        dp_value: dp_value(p, &vf),
        hjb_residual: hjb_residual(&vf, p),
        problem: p.clone(),
        value_function: vf,
        relaxed,
        certificate,
        maximum_principle,
        u_v_residual,
    })
}

/// Scalar checks of a control run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlSummary {
    pub dp_value: f64,
    pub lp_value: f64,
    pub status: String,
    pub c0: Option<f64>,
    pub mean_cost: Option<f64>,
    pub support_violation: Option<f64>,
    pub off_support_min_slack: Option<f64>,
    pub u_v_residual: Option<f64>,
    pub hjb_residual: f64,
    pub boundary_contact: Vec<usize>,
    pub duplicate_controls: usize,
}

impl ControlRun {
    /// Logs a warning for every supported state on the box boundary.
    pub fn warn_box_contact(&self) {
        for &x in &self.relaxed.boundary_contact {
            log::warn!("optimal measure touches the box boundary at state {x}");
        }
    }

    pub fn summary(&self) -> ControlSummary {
        ControlSummary {
            dp_value: self.dp_value,
            lp_value: self.relaxed.value,
            status: self.relaxed.status.as_str().to_string(),
            c0: self.certificate.as_ref().map(|c| c.c0),
            mean_cost: self.certificate.as_ref().map(|c| c.mean_cost),
            support_violation: self.maximum_principle.map(|m| m.0),
            off_support_min_slack: self.maximum_principle.map(|m| m.1),
            u_v_residual: self.u_v_residual,
            hjb_residual: self.hjb_residual,
            boundary_contact: self.relaxed.boundary_contact.clone(),
            duplicate_controls: self.problem.lint().len(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<(), FormatError> {
        let p = &self.problem;
        formats::write_json(&dir.join("problem.json"), &ControlSpec::of(p))?;
        formats::write_dynamics_csv(formats::create(&dir.join("dynamics.csv"))?, p)?;
        formats::write_costs_csv(formats::create(&dir.join("costs.csv"))?, p)?;
        formats::write_value_function_csv(formats::create(&dir.join("value_function.csv"))?, p, &self.value_function)?;
        if let Some(c) = &self.certificate {
            formats::write_control_slack_csv(formats::create(&dir.join("control_slack.csv"))?, p, c, &self.relaxed.flow)?;
        }
        formats::write_json(&dir.join("control.json"), &self.summary())
    }
}
