use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use actionlab::formats::{self, ControlSpec, DiagnosticsSummary, FormatError, GridSpec, SolutionSummary};
use actionlab::pipeline::{certify_solution, run_control};
use actionlab::scenarios::{control_checks, Settings};
use actionlab::{find, refinement_sweep, registry, suite, Params, ScenarioError};
use actionlab_core::{
    solve_boundary, solve_closed, BoundaryCurrent, Constraint, LagrangianTable, OptimalSolution, Status,
};
use clap::{Args, Parser, Subcommand};

/// Discrete action minimization laboratory.
#[derive(Parser)]
#[command(name = "actionlab", version)]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, default_value = "runs")]
    outdir: PathBuf,
    /// Tolerance of the certificate checks.
    #[arg(long, global = true, default_value_t = 1e-8)]
    tol: f64,
    /// Seed of the random-instance suite.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ProblemFiles {
    /// Grid JSON {dim, n, stencil_radius, h}.
    #[arg(long)]
    grid: PathBuf,
    /// Lagrangian CSV (node_index…, offset…, value).
    #[arg(long)]
    lagrangian: PathBuf,
    /// Boundary current CSV (node_index…, charge); closed problem if omitted.
    #[arg(long)]
    current: Option<PathBuf>,
}

#[derive(Args)]
struct ScenarioParams {
    /// Parameter override `key=value` (repeatable).
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
    /// Flat `key = value` configuration file; `--param` wins over it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an action problem: writes solution.csv and solution.json.
    Solve(ProblemFiles),
    /// Certify a solution: writes the certificate, slack, envelope and diagnostics.
    Certify {
        #[command(flatten)]
        problem: ProblemFiles,
        /// Measure CSV (node_index…, offset…, weight).
        #[arg(long)]
        solution: PathBuf,
    },
    /// Solve and verify a finite-horizon control problem.
    Control {
        /// Problem JSON {grid, controls, t0, dt, initial}.
        #[arg(long)]
        problem: PathBuf,
        /// Dynamics CSV (state_index…, control, velocity…).
        #[arg(long)]
        dynamics: PathBuf,
        /// Costs CSV (state_index…, time_index, control, cost).
        #[arg(long)]
        costs: PathBuf,
    },
    /// Run a named scenario into <outdir>/<name>/<run id>/.
    Scenario {
        name: String,
        #[command(flatten)]
        params: ScenarioParams,
        /// Name the run directory after the current time instead of "golden".
        #[arg(long)]
        timestamp: bool,
    },
    /// Run a scenario over several resolutions.
    Sweep {
        name: String,
        /// Comma-separated resolutions.
        #[arg(long = "n", value_delimiter = ',', required = true)]
        ns: Vec<usize>,
        #[command(flatten)]
        params: ScenarioParams,
    },
    /// Random-instance property suite (uses --seed).
    Suite {
        /// Instances per property.
        #[arg(long, default_value_t = 100)]
        count: usize,
    },
    /// List scenarios and their parameters.
    List,
}

/// Outcome of a command: a usage problem, or a run whose checks may have failed.
enum Failure {
    Usage(String),
    Checks(String),
}

impl From<FormatError> for Failure {
    fn from(e: FormatError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        if e.is_usage() || matches!(e, ScenarioError::Format(_)) {
            Failure::Usage(e.to_string())
        } else {
            Failure::Checks(e.to_string())
        }
    }
}

type Outcome = Result<bool, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if !(cli.tol >= 0.0 && cli.tol.is_finite()) {
        eprintln!("error: --tol must be a nonnegative number");
        return ExitCode::from(2);
    }
    let settings = Settings { tol: cli.tol };
    let outcome = match &cli.command {
        Command::Solve(files) => solve(files, &cli.outdir),
        Command::Certify { problem, solution } => certify(problem, solution, &cli.outdir, &settings),
        Command::Control {
            problem,
            dynamics,
            costs,
        } => control(problem, dynamics, costs, &cli.outdir),
        Command::Scenario {
            name,
            params,
            timestamp,
        } => scenario(name, params, *timestamp, &cli.outdir, &settings),
        Command::Sweep { name, ns, params } => sweep(name, ns, params, &cli.outdir, &settings),
        Command::Suite { count } => run_suite(cli.seed, *count, &cli.outdir, &settings),
        Command::List => {
            list();
            Ok(true)
        }
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Checks(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load_problem(files: &ProblemFiles) -> Result<(LagrangianTable, Option<BoundaryCurrent>), FormatError> {
    let grid = formats::read_json::<GridSpec>(&files.grid)?.build()?;
    let table = formats::read_lagrangian_csv(formats::open(&files.lagrangian)?, &grid)?;
    let current = match &files.current {
        Some(path) => Some(formats::read_current_csv(formats::open(path)?, &grid)?),
        None => None,
    };
    Ok((table, current))
}

fn solve(files: &ProblemFiles, outdir: &Path) -> Outcome {
    let (table, current) = load_problem(files)?;
    let solution = match &current {
        None => solve_closed(&table),
        Some(c) => solve_boundary(&table, c),
    }
    .map_err(|e| Failure::Usage(e.to_string()))?;
    formats::write_measure_csv(formats::create(&outdir.join("solution.csv"))?, &solution.measure)?;
    formats::write_json(&outdir.join("solution.json"), &SolutionSummary::of(&solution))?;
    println!("{} value = {}", solution.status.as_str(), solution.value);
    Ok(solution.status == Status::Optimal)
}

fn certify(files: &ProblemFiles, solution: &Path, outdir: &Path, settings: &Settings) -> Outcome {
    let (table, current) = load_problem(files)?;
    let measure = formats::read_measure_csv(formats::open(solution)?, table.grid())?;
    let solution = OptimalSolution {
        constraint: match &current {
            None => Constraint::Closed,
            Some(c) => Constraint::Boundary(c.clone()),
        },
        value: measure.integrate(table.values()),
        measure,
        status: Status::Optimal,
    };
    let run = certify_solution(&table, current.as_ref(), solution).map_err(|e| Failure::Checks(e.to_string()))?;
    run.write(outdir)?;
    let r = &run.report;
    let tol = settings.tol;
    let checks = [
        ("duality_gap", r.duality_gap, r.duality_gap.abs() <= tol),
        ("slack_min", r.slack_min, r.slack_min >= -tol),
        ("slack_on_support_max", r.slack_on_support_max, r.slack_on_support_max <= tol),
        ("hamiltonian_residual_max", r.hamiltonian_residual_max, r.hamiltonian_residual_max <= tol),
        ("boundary_residual_max", r.boundary_residual_max, r.boundary_residual_max <= tol),
    ];
    print_checks(checks.iter().map(|(n, v, ok)| (*n, *v, *ok)));
    let summary = DiagnosticsSummary::from(r);
    println!("c0 = {}, momentum Lipschitz estimate = {}", run.c0(), summary.momentum_lipschitz_estimate);
    Ok(checks.iter().all(|c| c.2))
}

fn control(problem: &Path, dynamics: &Path, costs: &Path, outdir: &Path) -> Outcome {
    let spec: ControlSpec = formats::read_json(problem)?;
    let p = formats::read_control_problem(&spec, formats::open(dynamics)?, formats::open(costs)?)?;
    for dup in p.lint() {
        log::warn!(
            "state {} layer {}: control `{}` duplicates `{}` and is dominated",
            dup.state,
            dup.layer,
            p.controls()[dup.dropped],
            p.controls()[dup.kept]
        );
    }
    let run = run_control(&p).map_err(|e| Failure::Checks(e.to_string()))?;
    run.warn_box_contact();
    run.write(outdir)?;
    let checks = control_checks(&run);
    print_checks(checks.iter().map(|c| (c.name.as_str(), c.value, c.passed)));
    println!("value = {}, hjb residual = {}", run.dp_value, run.hjb_residual);
    Ok(checks.iter().all(|c| c.passed))
}

fn scenario_params(params: &ScenarioParams) -> Result<Params, Failure> {
    let usage = |e: actionlab::ConfigError| Failure::Usage(e.to_string());
    let base = match &params.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            Params::parse(&text).map_err(usage)?
        }
        None => Params::new(),
    };
    Ok(base.merged(&Params::from_overrides(&params.params).map_err(usage)?))
}

fn scenario(name: &str, params: &ScenarioParams, timestamp: bool, outdir: &Path, settings: &Settings) -> Outcome {
    let overrides = scenario_params(params)?;
    let run = find(name)?.run(&overrides, settings)?;
    let run_id = if timestamp {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        format!("t{secs}")
    } else {
        "golden".to_string()
    };
    let dir = run.write(outdir, &run_id)?;
    print_checks(run.checks.iter().map(|c| (c.name.as_str(), c.value, c.passed)));
    for (k, v) in &run.metrics {
        println!("  {k} = {v}");
    }
    println!("{} {} -> {}", if run.passed() { "PASS" } else { "FAIL" }, name, dir.display());
    Ok(run.passed())
}

fn sweep(name: &str, ns: &[usize], params: &ScenarioParams, outdir: &Path, settings: &Settings) -> Outcome {
    let base = scenario_params(params)?;
    let report = refinement_sweep(name, ns, &base, settings)?;
    let dir = report.write(outdir)?;
    let show = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.6e}"));
    println!("{:>6} {:>6} {:>14} {:>14} {:>14}", "n", "pass", "c0", "lipschitz", "hjb");
    for r in &report.rows {
        println!(
            "{:>6} {:>6} {:>14} {:>14} {:>14}{}",
            r.n,
            r.passed,
            show(r.c0),
            show(r.momentum_lipschitz),
            show(r.hjb_residual),
            r.error.as_ref().map(|e| format!("  error: {e}")).unwrap_or_default()
        );
    }
    println!("c0 gaps shrinking: {}", report.c0_gaps_shrinking);
    if let Some(ratio) = report.lipschitz_ratio {
        println!("Lipschitz max/min: {ratio}");
    }
    if !report.hjb_ratios.is_empty() {
        println!("HJB ratios: {:?}", report.hjb_ratios);
    }
    println!("-> {}", dir.display());
    Ok(report.all_passed() && report.lipschitz_stable())
}

fn run_suite(seed: u64, count: usize, outdir: &Path, settings: &Settings) -> Outcome {
    let lines = suite::random_suite(seed, count, settings.tol);
    formats::write_json(&outdir.join("suite.json"), &lines)?;
    for l in &lines {
        println!(
            "{} {} ({} instances, {} failures, worst {:e})",
            if l.passed { "PASS" } else { "FAIL" },
            l.name,
            l.instances,
            l.failures,
            l.worst
        );
    }
    Ok(lines.iter().all(|l| l.passed))
}

fn list() {
    for s in registry() {
        println!("{}: {}", s.name, s.about);
        for p in s.params {
            println!("    {:<11} {} ({})", p.name, p.help, p.kind);
        }
    }
}

fn print_checks<'a>(checks: impl Iterator<Item = (&'a str, f64, bool)>) {
    for (name, value, ok) in checks {
        println!("  [{}] {name} = {value:e}", if ok { "ok" } else { "FAILED" });
    }
}
