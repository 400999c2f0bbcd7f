use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use landing_core::planner::gradcheck::run_gradient_suite;
use landing_core::sim::{emit_outputs, plan_scene, preset, preset_names, run_scenario, PlanScene, ScenarioConfig};
use std::path::PathBuf;
use std::process::ExitCode;

/// Quadrotor take-off, tracking and landing simulator.
#[derive(Parser)]
#[command(name = "landing-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write ticks.csv, summary.json and trajectory_xyz.csv.
    Run {
        /// Scenario JSON file.
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        config: Option<PathBuf>,
        /// Built-in scenario name (see `presets list`).
        #[arg(long)]
        preset: Option<String>,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to the scenario's `output_dir`, then `out/<name>`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report zero planning time so outputs are byte-for-byte reproducible.
        #[arg(long)]
        no_timing: bool,
    },
    /// Plan once in a scene file and print the trajectory as CSV.
    Plan {
        #[arg(long)]
        scene: PathBuf,
        /// Number of evenly spaced samples.
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
    /// Check analytic cost gradients against central differences.
    Gradcheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        instances: usize,
        #[arg(long, default_value_t = 1e-6)]
        step: f64,
        /// Largest acceptable relative error.
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Built-in scenarios.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    /// List preset names.
    List,
    /// Print a preset as JSON.
    Show { name: String },
}

fn run(
    config: Option<PathBuf>,
    preset_name: Option<String>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    no_timing: bool,
) -> Result<ExitCode> {
    let mut cfg = match (config, preset_name) {
        (Some(path), _) => ScenarioConfig::from_file(&path).with_context(|| format!("loading {}", path.display()))?,
        (None, Some(name)) => preset(&name)?,
        (None, None) => bail!("either --config or --preset is required"),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if no_timing {
        cfg.planner.record_timing = false;
    }
    let dir = out
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join(&cfg.name));
    let result = run_scenario(&cfg)?;
    let written = emit_outputs(&result.metrics, &result.logs, &dir)?;
    println!("{}", serde_json::to_string_pretty(&result.metrics)?);
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    Ok(if result.metrics.landed { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn plan_cmd(scene: PathBuf, samples: usize) -> Result<ExitCode> {
    let text = std::fs::read_to_string(&scene).with_context(|| format!("reading {}", scene.display()))?;
    let scene = PlanScene::from_json(&text)?;
    let result = plan_scene(&scene)?;
    let traj = &result.trajectory;
    let n = samples.max(2);
    println!("t,x,y,z,vx,vy,vz");
    for k in 0..n {
        let t = traj.duration() * k as f64 / (n - 1) as f64;
        let p = traj.evaluate(t, 0)?;
        let v = traj.evaluate(t, 1)?;
        println!("{t},{},{},{},{},{},{}", p.x, p.y, p.z, v.x, v.y, v.z);
    }
    eprintln!(
        "iterations {} | collision free {} | converged {} | {:.3} ms",
        result.iterations,
        result.collision_free,
        result.converged,
        result.timing.total_ms()
    );
    Ok(ExitCode::SUCCESS)
}

fn gradcheck(seed: u64, instances: usize, step: f64, tolerance: f64) -> ExitCode {
    let reports = run_gradient_suite(seed, instances, step);
    let mut ok = true;
    for r in &reports {
        let pass = r.max_relative_error <= tolerance;
        ok &= pass;
        println!(
            "{:<10} instances {:>4}  max rel err {:.3e}  {}",
            r.term,
            r.instances,
            r.max_relative_error,
            if pass { "ok" } else { "FAIL" }
        );
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run { config, preset, seed, out, no_timing } => run(config, preset, seed, out, no_timing),
        Command::Plan { scene, samples } => plan_cmd(scene, samples),
        Command::Gradcheck { seed, instances, step, tolerance } => Ok(gradcheck(seed, instances, step, tolerance)),
        Command::Presets { action: PresetAction::List } => {
            for name in preset_names() {
                println!("{name}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Presets { action: PresetAction::Show { name } } => {
            println!("{}", preset(&name)?.to_json());
            Ok(ExitCode::SUCCESS)
        }
    }
}
