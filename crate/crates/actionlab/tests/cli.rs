use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn actionlab(outdir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_actionlab"))
        .arg("--outdir")
        .arg(outdir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

#[test]
fn scenario_writes_golden_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = actionlab(dir.path(), &["scenario", "double_well"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("PASS double_well"));
    let run = dir.path().join("double_well/golden");
    for f in ["summary.json", "grid.json", "lagrangian.csv", "solution.csv", "envelope.csv", "nodes.csv"] {
        assert!(run.join(f).is_file(), "{f} missing");
    }
    assert_eq!(json(&run.join("summary.json"))["passed"], true);
}

#[test]
fn exit_codes_distinguish_usage_from_failed_checks() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&actionlab(dir.path(), &["scenario", "nope"])), 2);
    assert_eq!(code(&actionlab(dir.path(), &["scenario", "exact_form", "--param", "zzz=1"])), 2);
    assert_eq!(code(&actionlab(dir.path(), &["scenario", "exact_form", "--param", "n"])), 2);
    assert_eq!(code(&actionlab(dir.path(), &["--tol", "-1", "list"])), 2);
    let failed = actionlab(dir.path(), &["scenario", "tonelli_pendulum", "--param", "n=33"]);
    assert_eq!(code(&failed), 1);
    assert!(stdout(&failed).contains("[FAILED] c0"));
    assert_eq!(code(&actionlab(dir.path(), &["list"])), 0);
}

#[test]
fn config_file_and_params_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("rot.cfg");
    fs::write(&cfg, "# rotation setup\nn = 20\nb = 0.05\n").unwrap();
    let out = actionlab(
        dir.path(),
        &["scenario", "rotation", "--config", cfg.to_str().unwrap(), "--param", "n=12"],
    );
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let summary = json(&dir.path().join("rotation/golden/summary.json"));
    assert_eq!(summary["params"]["n"], "12");
    assert_eq!(summary["params"]["b"], "0.05");
}

#[test]
fn solve_then_certify_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert_eq!(code(&actionlab(root, &["scenario", "finsler_distance"])), 0);
    let run = root.join("finsler_distance/golden");
    let (grid, lag, cur) = (run.join("grid.json"), run.join("lagrangian.csv"), run.join("current.csv"));
    let files = [
        "--grid",
        grid.to_str().unwrap(),
        "--lagrangian",
        lag.to_str().unwrap(),
        "--current",
        cur.to_str().unwrap(),
    ];

    let solved = root.join("solved");
    let mut args = vec!["solve"];
    args.extend(files);
    let out = actionlab(&solved, &args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).starts_with("OPTIMAL"));
    assert_eq!(
        json(&solved.join("solution.json"))["value"],
        json(&run.join("solution.json"))["value"]
    );

    let certified = root.join("certified");
    let sol = solved.join("solution.csv");
    let mut args = vec!["certify", "--solution", sol.to_str().unwrap()];
    args.extend(files);
    let out = actionlab(&certified, &args);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert_eq!(
        fs::read(certified.join("certificate.json")).unwrap(),
        fs::read(run.join("certificate.json")).unwrap()
    );
}

#[test]
fn certify_rejects_a_suboptimal_measure() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert_eq!(code(&actionlab(root, &["scenario", "tonelli_pendulum", "--param", "n=8"])), 0);
    let run = root.join("tonelli_pendulum/golden");
    // every node resting: closed, but only the bottom of the well is optimal
    let mut text = String::from("node_index,offset,weight\n");
    for x in 0..8 {
        text.push_str(&format!("{x},0,0.125\n"));
    }
    let bad = root.join("uniform.csv");
    fs::write(&bad, text).unwrap();
    let out = actionlab(
        &root.join("bad"),
        &[
            "certify",
            "--grid",
            run.join("grid.json").to_str().unwrap(),
            "--lagrangian",
            run.join("lagrangian.csv").to_str().unwrap(),
            "--solution",
            bad.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&out), 1, "{}", stdout(&out));
}

#[test]
fn malformed_input_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.json");
    fs::write(&grid, r#"{"dim": 1, "n": 4, "stencil_radius": 1, "h": 0.25}"#).unwrap();
    let lag = dir.path().join("lagrangian.csv");
    fs::write(&lag, "node_index,offset,value\n0,0,1.0\n").unwrap();
    let out = actionlab(
        dir.path(),
        &["solve", "--grid", grid.to_str().unwrap(), "--lagrangian", lag.to_str().unwrap()],
    );
    assert_eq!(code(&out), 2);
    let missing = dir.path().join("missing.json");
    let out = actionlab(
        dir.path(),
        &["solve", "--grid", missing.to_str().unwrap(), "--lagrangian", lag.to_str().unwrap()],
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn control_command_reproduces_the_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert_eq!(code(&actionlab(root, &["scenario", "legendre_control", "--param", "n=8"])), 0);
    let run = root.join("legendre_control/golden");
    let out = actionlab(
        &root.join("ctl"),
        &[
            "control",
            "--problem",
            run.join("problem.json").to_str().unwrap(),
            "--dynamics",
            run.join("dynamics.csv").to_str().unwrap(),
            "--costs",
            run.join("costs.csv").to_str().unwrap(),
        ],
    );
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let again = root.join("ctl");
    for f in ["control.json", "value_function.csv", "control_slack.csv"] {
        assert_eq!(fs::read(again.join(f)).unwrap(), fs::read(run.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn sweep_and_suite_report_pass() {
    let dir = tempfile::tempdir().unwrap();
    let out = actionlab(dir.path(), &["sweep", "tonelli_pendulum", "--n", "16,32"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(dir.path().join("tonelli_pendulum/sweep/sweep.csv").is_file());
    let out = actionlab(dir.path(), &["--seed", "7", "suite", "--count", "12"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let lines = json(&dir.path().join("suite.json"));
    assert_eq!(lines.as_array().unwrap().len(), 4);
}
