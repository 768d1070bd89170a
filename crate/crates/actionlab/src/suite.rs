//! Seeded random-instance property suite behind `actionlab suite`.

use actionlab_core::{solve_closed, weak_kam_iterate, DualCertificate};
use serde::Serialize;

use crate::pipeline::{run_action, run_control};
use crate::random::{self, InitialKind};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteLine {
    pub name: &'static str,
    pub passed: bool,
    pub instances: usize,
    pub failures: usize,
    /// Worst value of the checked quantity.
    pub worst: f64,
}

impl SuiteLine {
    fn new(name: &'static str, instances: usize, failures: usize, worst: f64) -> Self {
        Self {
            name,
            passed: failures == 0,
            instances,
            failures,
            worst,
        }
    }
}

/// Duality, energy, weak KAM and control checks on `count` random instances each.
pub fn random_suite(seed: u64, count: usize, tol: f64) -> Vec<SuiteLine> {
    let mut rng = random::rng(seed);
    let mut lines = Vec::new();

    let (mut gap_fail, mut gap_worst) = (0, 0.0f64);
    let (mut energy_fail, mut energy_worst) = (0, 0.0f64);
    let (mut kam_fail, mut kam_worst) = (0, 0.0f64);
    for _ in 0..count {
        let table = random::closed_instance(&mut rng, 64);
        match run_action(&table, None) {
            Ok(run) => {
                let r = &run.report;
                let bad = r.duality_gap.abs() > tol || r.slack_min < -tol || r.slack_on_support_max > tol;
                gap_fail += usize::from(bad);
                gap_worst = gap_worst.max(r.duality_gap.abs()).max(r.slack_on_support_max).max(-r.slack_min);
                energy_fail += usize::from(r.hamiltonian_residual_max > tol);
                energy_worst = energy_worst.max(r.hamiltonian_residual_max);
            }
            Err(e) => {
                log::warn!("random closed instance failed: {e}");
                gap_fail += 1;
                energy_fail += 1;
            }
        }
        let n = table.grid().node_count();
        let ok = solve_closed(&table).ok().and_then(|sol| {
            let f = weak_kam_iterate(&table, sol.value, n).ok()?;
            Some(DualCertificate::from_potential(&table, f, sol.value, 0).ok()?.slack_min())
        });
        match ok {
            Some(s) if s >= -tol => kam_worst = kam_worst.max(-s),
            _ => kam_fail += 1,
        }
    }
    lines.push(SuiteLine::new("closed duality and slack", count, gap_fail, gap_worst));
    lines.push(SuiteLine::new("energy conservation", count, energy_fail, energy_worst));
    lines.push(SuiteLine::new("weak KAM at the critical value", count, kam_fail, kam_worst));

    let (mut ctl_fail, mut ctl_worst) = (0, 0.0f64);
    for i in 0..count {
        let kind = [InitialKind::Distribution, InitialKind::Point, InitialKind::Free][i % 3];
        let p = random::control_problem(&mut rng, kind);
        match run_control(&p) {
            Ok(run) => {
                let gap = (run.dp_value - run.relaxed.value).abs();
                let mp = run.maximum_principle.map_or(0.0, |(on, off)| on.max(-off));
                let uv = run.u_v_residual.unwrap_or(0.0);
                let certified = kind == InitialKind::Distribution || run.certificate.is_some();
                ctl_worst = ctl_worst.max(gap).max(mp).max(uv);
                ctl_fail += usize::from(gap > 1e-9 || mp > tol || uv > tol || !certified);
            }
            Err(e) => {
                log::warn!("random control problem failed: {e}");
                ctl_fail += 1;
            }
        }
    }
    lines.push(SuiteLine::new("control DP, LP and certificate", count, ctl_fail, ctl_worst));
    lines
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes() {
        let lines = random_suite(3, 10, 1e-8);
        assert_eq!(lines.len(), 4);
        for l in &lines {
            assert!(l.passed, "{l:?}");
        }
    }
}
