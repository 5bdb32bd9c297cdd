mod common;

use std::process::{Command, Stdio};

use common::{cache_dir, shipped};
use metaplan::cli::{cmd_plan, cmd_precompute, cmd_simulate, read_plan, CliError, Resolved, RunConfig};
use metaplan::environment::Workspace;
use metaplan::simulator::{
    export_trace, read_trace, run, ControllerMode, DisturbanceMode, Scenario, SimConfig, TraceRow,
};
use metaplan::suite::SuiteError;

fn config(seed: u64, disturbance: DisturbanceMode, controller: ControllerMode) -> SimConfig {
    SimConfig {
        seed,
        disturbance,
        controller,
        ..SimConfig::default()
    }
}

#[test]
fn cluttered_runs_stay_inside_their_bounds() {
    let suite = shipped();
    for (seeds, mode) in [
        (0..8, DisturbanceMode::Random),
        (100..103, DisturbanceMode::Adversarial),
    ] {
        for seed in seeds {
            let sc = Scenario::random_spheres(seed, 10, (0.5, 1.5));
            let (trace, s) = run(&sc, suite, &config(seed, mode, ControllerMode::Optimal)).unwrap();
            assert_eq!((s.violation_steps, s.collision_steps), (0, 0), "seed {seed}: {s:?}");
            assert!(s.reached_goal, "seed {seed}: {s:?}");
            assert!(s.replans >= 1, "obstacles start unknown");
            assert!(trace.records.iter().all(|r| !r.collision && !r.teb_violation));
        }
    }
}

/// Open box, long straight legs, worst-case disturbance.
fn open_field() -> Scenario {
    Scenario {
        workspace: Workspace::new([0.0, 0.0, 0.0], [20.0, 10.0, 3.0]).unwrap(),
        obstacles: vec![],
        sensing_radius: 4.0,
        start: [2.0, 2.0, 1.5],
        goal: [18.0, 8.0, 1.5],
    }
}

#[test]
fn lqr_leaves_the_bound_where_the_optimal_controller_does_not() {
    let suite = shipped();
    let sc = open_field();
    let (_, lqr) = run(
        &sc,
        suite,
        &config(3, DisturbanceMode::Adversarial, ControllerMode::Lqr),
    )
    .unwrap();
    let (_, opt) = run(
        &sc,
        suite,
        &config(3, DisturbanceMode::Adversarial, ControllerMode::Optimal),
    )
    .unwrap();
    assert!(lqr.violation_steps > 0, "{lqr:?}");
    assert_eq!(opt.violation_steps, 0, "{opt:?}");
}

#[test]
fn traces_are_byte_identical_for_a_seed() {
    let suite = shipped();
    let dir = tempfile::tempdir().unwrap();
    let sc = Scenario::random_spheres(4, 10, (0.5, 1.5));
    for stem in ["a", "b"] {
        let (trace, _) = run(&sc, suite, &config(4, DisturbanceMode::Random, ControllerMode::Optimal)).unwrap();
        export_trace(&trace, dir.path(), stem).unwrap();
    }
    for suffix in ["", "_geometry"] {
        let a = std::fs::read(dir.path().join(format!("a{suffix}.csv"))).unwrap();
        let b = std::fs::read(dir.path().join(format!("b{suffix}.csv"))).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b);
    }
}

#[test]
fn trace_csv_round_trips() {
    let suite = shipped();
    let dir = tempfile::tempdir().unwrap();
    let (trace, _) = run(
        &open_field(),
        suite,
        &config(1, DisturbanceMode::Random, ControllerMode::Optimal),
    )
    .unwrap();
    export_trace(&trace, dir.path(), "t").unwrap();
    let rows = read_trace(&dir.path().join("t.csv")).unwrap();
    let expected: Vec<TraceRow> = trace.records.iter().map(TraceRow::from).collect();
    assert_eq!(rows, expected);
}

#[test]
fn undersized_sensing_is_refused() {
    let mut sc = open_field();
    sc.sensing_radius = 1.0;
    assert!(run(&sc, shipped(), &SimConfig::default()).is_err());
}

fn resolved(out: &std::path::Path) -> Resolved {
    shipped();
    Resolved {
        config: RunConfig::default(),
        base: ".".into(),
        out: out.to_path_buf(),
        artifacts: cache_dir().join("suite"),
    }
}

#[test]
fn pipeline_reuses_artifacts_and_refuses_stale_ones() {
    let dir = tempfile::tempdir().unwrap();
    let r = resolved(dir.path());
    assert!(cmd_precompute(&r).unwrap().cached);

    let b = cmd_simulate(&r, &[0, 1, 2]).unwrap();
    assert_eq!(b.runs, 3);
    assert_eq!(b.violations(), 0);
    for s in 0..3 {
        assert!(dir.path().join(format!("trace_{s}.csv")).exists());
    }
    assert!(dir.path().join("summary.json").exists());

    let plans = cmd_plan(&r, &[5]).unwrap();
    let rows = read_plan(&dir.path().join("plan_5.csv")).unwrap();
    assert_eq!(rows.iter().map(|r| r.edge).max().unwrap() + 1, plans[0].1.edges.len());
    assert!(dir.path().join("tree_5.csv").exists());

    let mut stale = r.clone();
    stale.config.suite.lambda = 0.1;
    let e = cmd_simulate(&stale, &[0]).unwrap_err();
    assert!(matches!(e, CliError::Suite(SuiteError::Stale { .. })), "{e}");
}

#[test]
fn binary_exit_status_reports_violations() {
    shipped();
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_metaplan");
    let artifacts = cache_dir().join("suite");
    let run = |extra: &[&str]| {
        Command::new(bin)
            .args(["simulate", "--seeds", "0..1", "--out"])
            .arg(dir.path())
            .env("METAPLAN_ARTIFACTS", &artifacts)
            .env("RUST_LOG", "warn")
            .args(extra)
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status()
            .unwrap()
    };
    assert_eq!(run(&[]).code(), Some(0));
    assert_eq!(
        run(&["--controller", "lqr", "--disturbance", "adversarial"]).code(),
        Some(1)
    );
    let missing = Command::new(bin)
        .args(["plan", "--artifacts"])
        .arg(dir.path().join("nothing"))
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("metaplan precompute"));
}

#[test]
fn shipped_configs_load() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let c = RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        c.scenario.build(0, path.parent().unwrap()).unwrap();
        n += 1;
    }
    assert!(n >= 2);
}
