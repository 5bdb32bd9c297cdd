mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::{
    corridor_plan, corridor_split, enlarged_fixture, escape_test, hausdorff_cells, shipped, solved, stepped_time, xy, z,
};
use metaplan::cli::write_plan;
use metaplan::dynamics::{PlannerSpeed, Subsystem2Params, Vec3};
use metaplan::environment::Workspace;
use metaplan::geo_planner::travel_time_lower_bound;
use metaplan::metaplanner::{extend, extract_plan, informed_reject, validate_plan, BacktrackMode};
use metaplan::reachability::{
    extract_bound, extract_switching_bound, solve_invariant_set, AnalyticInvariantSet, Grid2, SolverSettings,
};
use metaplan::simulator::{export_trace, run, ControllerMode, DisturbanceMode, Scenario, SimConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Check = Result<String, String>;
type CheckFn = fn() -> Check;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sim(seed: u64, disturbance: DisturbanceMode, controller: ControllerMode) -> SimConfig {
    SimConfig {
        seed,
        disturbance,
        controller,
        ..SimConfig::default()
    }
}

fn hausdorff() -> Check {
    let grid = Grid2::default();
    let mut worst_h: f64 = 0.0;
    let mut worst_t: f64 = 0.0;
    for b in [0.25, 0.5, 1.0] {
        let p = xy(b);
        let start = Instant::now();
        let vf = solve_invariant_set(&p, &grid, &SolverSettings::default()).map_err(|e| e.to_string())?;
        worst_t = worst_t.max(start.elapsed().as_secs_f64());
        worst_h = worst_h.max(hausdorff_cells(
            &vf,
            &AnalyticInvariantSet::new(&p).map_err(|e| e.to_string())?,
        ));
    }
    ensure(
        worst_h <= 2.0 && worst_t < 60.0,
        format!("worst Hausdorff {worst_h:.2} cells, slowest solve {worst_t:.1} s"),
    )
}

fn monotone() -> Check {
    let grid = Grid2::default();
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, make) in [("xy", xy as fn(f64) -> Subsystem2Params), ("z", z)] {
        let bounds: Vec<f64> = [0.25, 0.5, 0.75, 1.0]
            .iter()
            .map(|&b| extract_bound(&solved(&make(b), &grid)))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        ok &= bounds.windows(2).all(|w| w[0] < w[1]);
        lines.push(format!("{name} {bounds:.3?}"));
    }
    ensure(ok, lines.join(", "))
}

fn switching_bounds() -> Check {
    let s = shipped();
    let dr = s.config.grid.dr();
    let mut worst: f64 = 0.0;
    for sw in &s.switches {
        for a in 0..3 {
            let large = s.planners[sw.from].axis(a);
            let teb = extract_bound(large).map_err(|e| e.to_string())?;
            let ssb = extract_switching_bound(sw.axis(a), large).map_err(|e| e.to_string())?;
            worst = worst.max((ssb - teb).abs());
        }
    }
    ensure(
        worst <= dr + 1e-12,
        format!("{} pairs, worst gap {:.2} cells", s.switches.len(), worst / dr),
    )
}

fn closed_loop() -> Check {
    let suite = shipped();
    let start = Instant::now();
    let jobs: Vec<(u64, DisturbanceMode)> = (0..100)
        .map(|s| (s, DisturbanceMode::Random))
        .chain((1000..1010).map(|s| (s, DisturbanceMode::Adversarial)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(seed, mode)| {
            let sc = Scenario::random_spheres(seed, 10, (0.5, 1.5));
            run(&sc, suite, &sim(seed, mode, ControllerMode::Optimal)).map(|(_, s)| s)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let wall = start.elapsed().as_secs_f64();
    let violations: usize = results.iter().map(|s| s.violation_steps).sum();
    let collisions: usize = results.iter().map(|s| s.collision_steps).sum();
    let reached = results.iter().filter(|s| s.reached_goal).count();
    let ratio = results.iter().map(|s| s.max_bound_ratio).fold(0.0, f64::max);
    ensure(
        violations == 0 && collisions == 0 && wall < 600.0,
        format!(
            "{} runs, {violations} violation steps, {collisions} collision steps, {reached} reached goal, max bound ratio {ratio:.3}, {wall:.1} s",
            results.len()
        ),
    )
}

fn lqr_contrast() -> Check {
    let suite = shipped();
    let sc = Scenario {
        workspace: Workspace::new([0.0, 0.0, 0.0], [20.0, 10.0, 3.0]).map_err(|e| e.to_string())?,
        obstacles: vec![],
        sensing_radius: 4.0,
        start: [2.0, 2.0, 1.5],
        goal: [18.0, 8.0, 1.5],
    };
    let go = |c| {
        run(&sc, suite, &sim(3, DisturbanceMode::Adversarial, c))
            .map(|(_, s)| s)
            .map_err(|e| e.to_string())
    };
    let (lqr, opt) = (go(ControllerMode::Lqr)?, go(ControllerMode::Optimal)?);
    ensure(
        lqr.violation_steps > 0 && opt.violation_steps == 0,
        format!(
            "LQR {} violation steps (ratio {:.2}), optimal {} (ratio {:.2})",
            lqr.violation_steps, lqr.max_bound_ratio, opt.violation_steps, opt.max_bound_ratio
        ),
    )
}

fn corridor() -> Check {
    let (plan, suite, env) = corridor_plan(0);
    validate_plan(&plan, &suite, &env).map_err(|e| e.to_string())?;
    let (through, open) = corridor_split(&plan);
    let fastest_open = open.iter().min().copied();
    let slower = !through.is_empty() && fastest_open.is_some_and(|f| through.iter().all(|k| *k > f));
    ensure(
        slower,
        format!(
            "corridor planners {through:?}, open-space planners {open:?}, plan time {:.1} s",
            plan.total_time
        ),
    )
}

fn soundness() -> Check {
    let s = shipped();
    let mut exits = 0;
    let mut worst = f64::NEG_INFINITY;
    let mut count = 0;
    for (k, p) in s.planners.iter().enumerate() {
        for vf in [&p.xy, &p.z] {
            let st = escape_test(vf, s.config.lambda, 10_000, 400, 100 + k as u64);
            exits += st.exits;
            worst = worst.max(st.worst_excess);
            count += 1;
        }
    }
    ensure(
        exits == 0,
        format!("{count} value functions x 10000 rollouts, {exits} exits, worst V - margin {worst:.4}"),
    )
}

fn informed() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let speed = PlannerSpeed::new(1.0, 1.0, 0.75).map_err(|e| e.to_string())?;
    let (mut rejected, mut wrong) = (0, 0);
    for _ in 0..200 {
        let mut pt = || -> Vec3 {
            [
                rng.gen_range(0.0..20.0),
                rng.gen_range(0.0..10.0),
                rng.gen_range(0.0..3.0),
            ]
        };
        let (root, goal, sample) = (pt(), pt(), pt());
        let best = travel_time_lower_bound(&root, &goal, &speed) * rng.gen_range(1.0..2.0) + 1e-3;
        let t = stepped_time(&root, &sample, &goal, &speed);
        let r = informed_reject(&sample, &root, &goal, Some(best), &speed);
        rejected += r as usize;
        // within the stepping resolution either answer is fine
        if (t - best).abs() > 2e-4 && r != (t >= best) {
            wrong += 1;
        }
    }
    ensure(
        wrong == 0,
        format!("200 instances, {rejected} rejected, {wrong} disagreements"),
    )
}

fn backtracking() -> Check {
    let (mut tree, suite, env, w, target) = enlarged_fixture(BacktrackMode::Discard);
    let discard = extend(&mut tree, w, &target, &suite, &env, BacktrackMode::Discard);
    let (mut tree, suite, env, w, target) = enlarged_fixture(BacktrackMode::Recursive);
    let recursive = extend(&mut tree, w, &target, &suite, &env, BacktrackMode::Recursive);
    let planners = recursive.map(|id| {
        extract_plan(&tree, id, &suite)
            .edges
            .iter()
            .map(|e| e.planner)
            .collect::<Vec<_>>()
    });
    ensure(
        discard.is_none() && planners.as_deref() == Some(&[1, 1, 1][..]),
        format!(
            "discard accepted: {}, recursive planners {planners:?}",
            discard.is_some()
        ),
    )
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let read = |name: &str| std::fs::read(dir.path().join(name)).map_err(|e| e.to_string());
    for stem in ["a", "b"] {
        let (plan, ..) = corridor_plan(7);
        write_plan(&plan, &dir.path().join(format!("plan_{stem}.csv"))).map_err(|e| e.to_string())?;
        let sc = Scenario::random_spheres(4, 10, (0.5, 1.5));
        let (trace, _) = run(
            &sc,
            shipped(),
            &sim(4, DisturbanceMode::Random, ControllerMode::Optimal),
        )
        .map_err(|e| e.to_string())?;
        export_trace(&trace, dir.path(), &format!("trace_{stem}")).map_err(|e| e.to_string())?;
    }
    let plans = read("plan_a.csv")? == read("plan_b.csv")?;
    let traces = read("trace_a.csv")? == read("trace_b.csv")?;
    let geometry = read("trace_a_geometry.csv")? == read("trace_b_geometry.csv")?;
    ensure(
        plans && traces && geometry,
        format!("plan identical: {plans}, trace identical: {traces}, geometry identical: {geometry}"),
    )
}

fn main() {
    let checks: [(&str, CheckFn); 10] = [
        ("zero-level set within 2 cells of the analytic boundary", hausdorff),
        ("bounds increase with planner speed", monotone),
        ("switching bounds equal the larger bound", switching_bounds),
        ("closed-loop runs stay inside their bounds", closed_loop),
        ("LQR tracking leaves the bound", lqr_contrast),
        ("corridor uses slower planners", corridor),
        ("supervised control keeps states certified", soundness),
        ("informed rejection is exact", informed),
        ("recursive backtracking recovers a fast branch", backtracking),
        ("plans and traces are reproducible", determinism),
    ];
    let start = Instant::now();
    let mut failed = Vec::new();
    for (i, (name, check)) in checks.iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {:>2} PASS  {name}: {d} [{secs:.1} s]", i + 1),
            Err(d) => {
                println!("criterion {:>2} FAIL  {name}: {d} [{secs:.1} s]", i + 1);
                failed.push(i + 1);
            }
        }
    }
    println!(
        "acceptance: {} of 10 passed in {:.1} s",
        10 - failed.len(),
        start.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
