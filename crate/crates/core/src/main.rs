use std::process::ExitCode;

use clap::Parser;
use log::info;
use metaplan::cli::{cmd_plan, cmd_precompute, cmd_simulate, Cli, CliError, Command};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Precompute(args) => {
            let r = args.resolve()?;
            let report = cmd_precompute(&r)?;
            if report.cached {
                info!(
                    "artifacts in {} match the config, skipped solving",
                    report.dir.display()
                );
            } else {
                info!("wrote artifacts to {}", report.dir.display());
            }
            for (k, p) in report.suite.planners.iter().enumerate() {
                println!("planner {k}: speed {:?} teb {:?}", p.speed.as_array(), p.teb.as_array());
            }
            for s in &report.suite.switches {
                println!(
                    "switch {} -> {}: bound {:?} horizon {:.3} s",
                    s.from,
                    s.to,
                    s.bound.as_array(),
                    s.horizon
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Plan(args) => {
            let (r, seeds) = args.resolve()?;
            for (seed, plan) in cmd_plan(&r, &seeds)? {
                println!(
                    "seed {seed}: {} edges, {:.2} s, planners {:?}",
                    plan.edges.len(),
                    plan.total_time,
                    plan.planners_used()
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate(args) => {
            let (r, seeds) = args.resolve()?;
            let b = cmd_simulate(&r, &seeds)?;
            println!(
                "runs {} reached {} violation_steps {} collision_steps {} max_bound_ratio {:.3} mean_run {:.2} s wall {:.1} s",
                b.runs,
                b.reached_goal,
                b.violation_steps,
                b.collision_steps,
                b.max_bound_ratio,
                b.mean_run_seconds,
                b.wall_seconds
            );
            Ok(if b.violations() == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
    }
}
