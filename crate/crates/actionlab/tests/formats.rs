use actionlab::formats::{self, ControlSpec, GridSpec, InitialSpec, SolutionSummary};
use actionlab::random::{self, InitialKind};
use actionlab_core::{
    boundary_of_measure, build_torus_grid, sample_lagrangian, solve_closed, solve_value_function, DiscreteMeasure,
    InitialCondition, Status,
};
use proptest::prelude::*;

fn to_string(bytes: Vec<u8>) -> String {
    String::from_utf8(bytes).expect("utf-8")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn closed_problem_files_round_trip(seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let table = random::closed_instance(&mut rng, 24);
        let grid = table.grid();

        let spec = GridSpec::of(grid).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        let back: GridSpec = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(&back, &spec);
        let rebuilt = back.build().unwrap();
        prop_assert_eq!(rebuilt.edge_count(), grid.edge_count());

        let mut buf = Vec::new();
        formats::write_lagrangian_csv(&mut buf, &table).unwrap();
        let read = formats::read_lagrangian_csv(buf.as_slice(), &rebuilt).unwrap();
        prop_assert_eq!(read.values(), table.values());

        let sol = solve_closed(&table).unwrap();
        let mut buf = Vec::new();
        formats::write_measure_csv(&mut buf, &sol.measure).unwrap();
        let mu = formats::read_measure_csv(buf.as_slice(), &rebuilt).unwrap();
        for e in 0..grid.edge_count() {
            prop_assert_eq!(mu.weight(e), sol.measure.weight(e));
        }
    }

    #[test]
    fn currents_round_trip(seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let table = random::closed_instance(&mut rng, 16);
        let grid = table.grid();
        // a path-like measure with nonzero boundary
        let weights = (0..grid.edge_count()).filter(|e| e % 3 == 0).map(|e| (e, 0.25 + e as f64));
        let mu = DiscreteMeasure::from_weights(grid, weights).unwrap();
        let c = boundary_of_measure(&mu);
        let mut buf = Vec::new();
        formats::write_current_csv(&mut buf, &c).unwrap();
        let back = formats::read_current_csv(buf.as_slice(), grid).unwrap();
        prop_assert_eq!(back.charges(), c.charges());
    }

    #[test]
    fn control_problems_round_trip(seed in any::<u64>(), kind in 0usize..3) {
        let mut rng = random::rng(seed);
        let kind = [InitialKind::Distribution, InitialKind::Point, InitialKind::Free][kind];
        let p = random::control_problem(&mut rng, kind);
        let spec = ControlSpec::of(&p);
        let spec: ControlSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        let (mut dynamics, mut costs) = (Vec::new(), Vec::new());
        formats::write_dynamics_csv(&mut dynamics, &p).unwrap();
        formats::write_costs_csv(&mut costs, &p).unwrap();
        let back = formats::read_control_problem(&spec, dynamics.as_slice(), costs.as_slice()).unwrap();
        prop_assert_eq!(back, p);
    }
}

#[test]
fn two_dimensional_lagrangian_round_trips() {
    let grid = build_torus_grid(2, 5, 1, 0.2).unwrap();
    let table = sample_lagrangian(&grid, |x, v| (v[0] * v[0] + v[1] * v[1]) / 2.0 + x[0] * x[1]).unwrap();
    let mut buf = Vec::new();
    formats::write_lagrangian_csv(&mut buf, &table).unwrap();
    let text = to_string(buf.clone());
    assert!(text.starts_with("node_index_0,node_index_1,offset_0,offset_1,"), "{text}");
    let back = formats::read_lagrangian_csv(buf.as_slice(), &grid).unwrap();
    assert_eq!(back.values(), table.values());
}

#[test]
fn point_initial_condition_reads_coordinates() {
    let mut rng = random::rng(11);
    let p = random::control_problem(&mut rng, InitialKind::Free);
    let mut spec = ControlSpec::of(&p);
    let last = p.states().len() - 1;
    let coords = p.states().coords(last);
    spec.initial = InitialSpec::Point {
        state: coords[..p.states().dim()].to_vec(),
    };
    let (mut dynamics, mut costs) = (Vec::new(), Vec::new());
    formats::write_dynamics_csv(&mut dynamics, &p).unwrap();
    formats::write_costs_csv(&mut costs, &p).unwrap();
    let back = formats::read_control_problem(&spec, dynamics.as_slice(), costs.as_slice()).unwrap();
    assert_eq!(back.initial(), &InitialCondition::point(p.states().len(), last));
}

#[test]
fn missing_cost_rows_are_rejected() {
    let mut rng = random::rng(5);
    let p = random::control_problem(&mut rng, InitialKind::Point);
    let spec = ControlSpec::of(&p);
    let (mut dynamics, mut costs) = (Vec::new(), Vec::new());
    formats::write_dynamics_csv(&mut dynamics, &p).unwrap();
    formats::write_costs_csv(&mut costs, &p).unwrap();
    let text = to_string(costs);
    let truncated: String = text.lines().take(text.lines().count() - 1).map(|l| format!("{l}\n")).collect();
    assert!(formats::read_control_problem(&spec, dynamics.as_slice(), truncated.as_bytes()).is_err());
}

#[test]
fn value_function_rows_cover_every_state_and_time() {
    let mut rng = random::rng(21);
    let p = random::control_problem(&mut rng, InitialKind::Point);
    let vf = solve_value_function(&p);
    let mut buf = Vec::new();
    formats::write_value_function_csv(&mut buf, &p, &vf).unwrap();
    let mut reader = csv::Reader::from_reader(buf.as_slice());
    let rows = reader.records().count();
    assert_eq!(rows, p.states().len() * (p.steps() + 1));
}

#[test]
fn solution_summary_keeps_infinite_values() {
    let summary = SolutionSummary {
        value: f64::NEG_INFINITY,
        status: Status::Unbounded.as_str().to_string(),
        mass: 0.0,
    };
    let json = serde_json::to_string(&summary).unwrap();
    assert!(json.contains("\"-inf\""), "{json}");
    let back: SolutionSummary = serde_json::from_str(&json).unwrap();
    assert_eq!(back.value, f64::NEG_INFINITY);
    assert_eq!(back.status().unwrap(), Status::Unbounded);
}
