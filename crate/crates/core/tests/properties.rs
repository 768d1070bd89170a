use actionlab_core::certificate::DualCertificate;
use actionlab_core::control::{ControlProblem, InitialCondition, StateGrid};
use actionlab_core::convexify::lower_envelope_1d;
use actionlab_core::diagnostics::hamiltonian_excess;
use actionlab_core::*;
use proptest::prelude::*;

fn torus_table(n: usize, k: usize, h: f64, costs: &[f64]) -> LagrangianTable {
    let g = build_torus_grid(1, n, k, h).unwrap();
    let m = 2 * k + 1;
    let values = (0..n * m).map(|i| costs[i % costs.len()]).collect();
    LagrangianTable::from_values(&g, values).unwrap()
}

fn instance() -> impl Strategy<Value = LagrangianTable> {
    (2usize..12, 1usize..=2, prop::collection::vec(-1.0f64..1.0, 5..60))
        .prop_map(|(n, k, costs)| torus_table(n, k, 1.0 / n as f64, &costs))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stokes_identity(
        n in 2usize..10,
        weights in prop::collection::vec(0.0f64..2.0, 1..40),
        f in prop::collection::vec(-3.0f64..3.0, 10),
    ) {
        let g = build_torus_grid(1, n, 1, 0.3).unwrap();
        let mu = DiscreteMeasure::from_weights(
            &g,
            weights.iter().enumerate().map(|(i, &w)| (i % g.edge_count(), w)),
        ).unwrap();
        let f = &f[..n];
        let lhs = mu.integrate(&discrete_differential(f, &g));
        let rhs = boundary_of_measure(&mu).pair(f);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn boundary_is_linear(
        a in prop::collection::vec(0.0f64..1.0, 15),
        b in prop::collection::vec(0.0f64..1.0, 15),
        s in 0.1f64..5.0,
    ) {
        let g = build_torus_grid(1, 5, 1, 0.5).unwrap();
        let ma = DiscreteMeasure::from_weights(&g, a.iter().copied().enumerate()).unwrap();
        let mb = DiscreteMeasure::from_weights(&g, b.iter().copied().enumerate()).unwrap();
        let sum = boundary_of_measure(&ma.sum(&mb).unwrap().scaled(s).unwrap());
        let ca = boundary_of_measure(&ma);
        let cb = boundary_of_measure(&mb);
        for x in 0..5 {
            let expect = s * (ca.charge(x) + cb.charge(x));
            prop_assert!((sum.charge(x) - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn closed_minimizer_is_a_closed_probability(table in instance()) {
        let sol = solve_closed(&table).unwrap();
        prop_assert_eq!(sol.status, Status::Optimal);
        prop_assert!((sol.measure.mass() - 1.0).abs() < 1e-12);
        prop_assert!(boundary_of_measure(&sol.measure).charges().iter().all(|c| c.abs() < 1e-9));
        prop_assert!((sol.measure.integrate(table.values()) - sol.value).abs() < 1e-12);
    }

    #[test]
    fn closed_value_is_affine_equivariant(table in instance(), a in 0.1f64..4.0, b in -2.0f64..2.0) {
        let base = solve_closed(&table).unwrap().value;
        let moved = solve_closed(&table.affine(a, b).unwrap()).unwrap().value;
        prop_assert!((moved - (a * base + b)).abs() < 1e-9);
    }

    #[test]
    fn certificate_invariants(table in instance()) {
        let sol = solve_closed(&table).unwrap();
        let cert = certify_closed(&table, &sol).unwrap();
        prop_assert_eq!(cert.critical_constant, sol.value);
        prop_assert!(cert.slack_min() >= -1e-9);
        prop_assert!(cert.slack_on_support(&sol.measure) <= 1e-8);
        prop_assert!(cert.complementary_slackness(&sol.measure) <= 1e-8 * sol.measure.mass());
        // identity L = c₀ + df + g
        let df = cert.differential(&table);
        for (e, d) in df.iter().enumerate() {
            let r = table.value(e) - cert.critical_constant - d - cert.slack[e];
            prop_assert!(r.abs() < 1e-12);
        }
        // T[f] ≥ f with equality on the projected support
        let t = lax_oleinik_backward(&cert.potential, &table, cert.critical_constant);
        let h = table.grid().time_step();
        for (tx, fx) in t.iter().zip(&cert.potential) {
            prop_assert!(*tx >= fx - 1e-9);
        }
        for x in sol.measure.projected_support() {
            prop_assert!((t[x] - cert.potential[x]).abs() <= 1e-9 * (1.0 + h));
        }
    }

    #[test]
    fn gauge_invariance(table in instance(), shift in -10.0f64..10.0) {
        let sol = solve_closed(&table).unwrap();
        let cert = certify_closed(&table, &sol).unwrap();
        let moved = DualCertificate::from_potential(
            &table,
            cert.shifted(shift).potential,
            cert.critical_constant,
            cert.normalization_node,
        ).unwrap();
        for (a, b) in moved.slack.iter().zip(&cert.slack) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn weak_kam_output_is_dual_feasible(table in instance()) {
        let crit = solve_closed(&table).unwrap().value;
        let n = table.grid().node_count();
        let f = weak_kam_iterate(&table, crit, n).unwrap();
        let cert = DualCertificate::from_potential(&table, f, crit, 0).unwrap();
        prop_assert!(cert.slack_min() >= -1e-9);
    }

    #[test]
    fn lax_oleinik_is_monotone_and_commutes_with_constants(
        table in instance(),
        f in prop::collection::vec(-1.0f64..1.0, 12),
        bump in prop::collection::vec(0.0f64..1.0, 12),
        a in -5.0f64..5.0,
    ) {
        let n = table.grid().node_count();
        let f = &f[..n];
        let g: Vec<f64> = f.iter().zip(&bump).map(|(x, b)| x + b).collect();
        let c0 = 0.1;
        let tf = lax_oleinik_backward(f, &table, c0);
        let tg = lax_oleinik_backward(&g, &table, c0);
        prop_assert!(tf.iter().zip(&tg).all(|(x, y)| x <= y));
        let shifted: Vec<f64> = f.iter().map(|x| x + a).collect();
        let ts = lax_oleinik_backward(&shifted, &table, c0);
        prop_assert!(ts.iter().zip(&tf).all(|(s, t)| (s - t - a).abs() < 1e-12));
        let ff = lax_oleinik_forward(f, &table, c0);
        let fg = lax_oleinik_forward(&g, &table, c0);
        prop_assert!(ff.iter().zip(&fg).all(|(x, y)| x <= y));
    }

    #[test]
    fn boundary_solution_matches_current(
        table in instance(),
        from in 0usize..12,
        to in 0usize..12,
    ) {
        let n = table.grid().node_count();
        let positive = table.affine(1.0, 1.5).unwrap();
        let c = BoundaryCurrent::point_pair(table.grid(), from % n, to % n).unwrap();
        let sol = solve_boundary(&positive, &c).unwrap();
        prop_assert_eq!(sol.status, Status::Optimal);
        let b = boundary_of_measure(&sol.measure);
        for x in 0..n {
            prop_assert!((b.charge(x) - c.charge(x)).abs() < 1e-9);
        }
        let cert = certify_boundary(&positive, &c, &sol).unwrap();
        prop_assert!(cert.slack_min() >= -1e-9);
        prop_assert!(cert.slack_on_support(&sol.measure) <= 1e-8);
        prop_assert!((cert.pairing(&c) - sol.value).abs() < 1e-9);
    }

    #[test]
    fn decomposition_recomposes(
        n in 2usize..9,
        weights in prop::collection::vec(0.0f64..1.0, 1..30),
    ) {
        let g = build_torus_grid(1, n, 1, 1.0).unwrap();
        let mu = DiscreteMeasure::from_weights(
            &g,
            weights.iter().enumerate().map(|(i, &w)| (i % g.edge_count(), w)),
        ).unwrap();
        let d = decompose(&mu);
        let back = d.recompose(&g).unwrap();
        for e in 0..g.edge_count() {
            prop_assert!((back.weight(e) - mu.weight(e)).abs() < 1e-9);
        }
        for c in &d.cycles {
            prop_assert_eq!(c.nodes.first(), c.nodes.last());
        }
    }

    #[test]
    fn envelope_invariants(ls in prop::collection::vec(-3.0f64..3.0, 2..10)) {
        let vs: Vec<f64> = (0..ls.len()).map(|i| i as f64 * 0.5 - 1.0).collect();
        let env = lower_envelope_1d(&vs, &ls);
        for (i, l) in ls.iter().enumerate() {
            prop_assert!(env.values[i] <= *l);
            prop_assert!(env.p_minus[i] <= env.p_plus[i] + 1e-12);
        }
        for w in env.values.windows(3) {
            prop_assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-9);
        }
        let again = lower_envelope_1d(&vs, &env.values);
        for (a, b) in again.values.iter().zip(&env.values) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn hamiltonian_bounds(table in instance()) {
        let sol = solve_closed(&table).unwrap();
        let cert = certify_closed(&table, &sol).unwrap();
        let excess = hamiltonian_excess(&table, &cert).unwrap();
        prop_assert!(excess.iter().all(|&h| h <= 1e-9));
        let energy = check_energy_conservation(&table, &cert, &sol.measure).unwrap();
        prop_assert!(energy <= cert.slack_on_support(&sol.measure) + 1e-12);
    }

    #[test]
    fn exclusion_never_raises_lipschitz_estimate(
        p in prop::collection::vec(-2.0f64..2.0, 12),
        mask in prop::collection::vec(any::<bool>(), 12),
        extra in 0usize..12,
    ) {
        let g = build_torus_grid(1, 12, 1, 1.0 / 12.0).unwrap();
        let momenta: Vec<Option<[f64; 2]>> = p.iter().map(|&v| Some([v, 0.0])).collect();
        let small: Vec<usize> = (0..12).filter(|&i| mask[i]).collect();
        let mut large = small.clone();
        large.push(extra);
        let a = estimate_momentum_lipschitz(&momenta, &g, &small).unwrap();
        let b = estimate_momentum_lipschitz(&momenta, &g, &large).unwrap();
        prop_assert!(b <= a);
    }
}

fn control_instance(costs: &[f64], states: usize, steps: usize) -> ControlProblem {
    let grid = StateGrid::line(states, 0.0, 1.0).unwrap();
    let offsets: Vec<[i32; 2]> = (0..states * 3).map(|i| [(i % 3) as i32 - 1, 0]).collect();
    let table: Vec<f64> = (0..steps * states * 3).map(|i| costs[i % costs.len()]).collect();
    ControlProblem::from_tables(
        grid,
        steps,
        0.5,
        vec!["left".into(), "stay".into(), "right".into()],
        offsets,
        table,
        InitialCondition::Free,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dynamic_programme_is_monotone(
        costs in prop::collection::vec(-1.0f64..1.0, 5..40),
        bump in prop::collection::vec(0.0f64..1.0, 5..40),
        states in 2usize..6,
        steps in 1usize..5,
    ) {
        let higher: Vec<f64> = costs.iter().enumerate().map(|(i, c)| c + bump[i % bump.len()]).collect();
        let lo = control::solve_value_function(&control_instance(&costs, states, steps));
        let hi = control::solve_value_function(&control_instance(&higher, states, steps));
        for j in 0..=steps {
            for x in 0..states {
                prop_assert!(lo.value(x, j) <= hi.value(x, j) + 1e-12);
            }
        }
    }

    #[test]
    fn control_certificate_identity(
        costs in prop::collection::vec(-1.0f64..1.0, 5..40),
        states in 2usize..6,
        steps in 1usize..5,
    ) {
        let p = control_instance(&costs, states, steps);
        let sol = solve_relaxed_lp(&p).unwrap();
        let cert = certify_control(&p, &sol).unwrap();
        let n = p.states().len();
        for (i, a) in p.arcs().iter().enumerate() {
            let du = (cert.u[(a.layer + 1) * n + a.next] - cert.u[a.layer * n + a.state]) / p.dt();
            let r = p.cost(a.state, a.layer, a.control) - cert.c0 - du - cert.w[i];
            prop_assert!(r.abs() < 1e-12);
        }
        for x in 0..n {
            prop_assert_eq!(cert.u_at(&p, x, 0), 0.0);
            prop_assert_eq!(cert.u_at(&p, x, p.steps()), 0.0);
        }
        let complementarity: f64 = sol.measure.support().map(|(e, m)| m * cert.w[e]).sum();
        prop_assert!(complementarity.abs() <= 1e-8 * sol.measure.mass());
    }
}

/// A dual-feasible discrete differential is not affine along fibers, so it can
/// rise above the convex envelope: here `f` peaks at node 0 and the rest edge
/// there carries all the slack.
#[test]
fn discrete_differential_can_exceed_envelope() {
    let g = build_torus_grid(1, 3, 1, 1.0 / 3.0).unwrap();
    let f = vec![1.0, 0.0, 0.0];
    let df = discrete_differential(&f, &g);
    let mut l = df.clone();
    let rest = g.edge_at(0, 1).unwrap();
    l[rest] += 5.0;
    let table = LagrangianTable::from_values(&g, l).unwrap();
    let cert = DualCertificate::from_potential(&table, f, 0.0, 0).unwrap();
    assert!(cert.slack_min() >= 0.0);
    let env = fiber_convex_envelope(&table).unwrap();
    assert_eq!(df[rest], 0.0);
    assert!((env.values()[rest] + 3.0).abs() < 1e-12);
}
