//! `hubtopo`: run the pipeline stage by stage or end to end.
//!
//! Exit codes: 0 success, 1 stage failure, 2 configuration error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hubtopo_core::config::RunConfig;
use hubtopo_core::exec::PlannerKind;
use hubtopo_core::pipeline::{ablate_bfs, no_memory_config, plan_task, Pipeline};
use hubtopo_core::CoreError;
use hubtopo_maze::{Goal, Task};

#[derive(Parser)]
#[command(name = "hubtopo", version, about = "Hub-topology imitation pipeline on a desk-scale maze")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (flat `key = value` file). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory; overrides `out` in the config and HUBTOPO_OUT.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Rebuild even if a stage's artifacts are up to date.
    #[arg(long)]
    force: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Ablation {
    Bfs,
    NoMemory,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the demonstration dataset.
    GenDemos(Common),
    /// Train the learned encoder (no-op for the oracle backend).
    TrainLow(Common),
    /// Encode demonstrations and build the hub topology.
    BuildTopology(Common),
    /// Train the hub dynamics model.
    TrainHigh(Common),
    /// Train one policy per source hub.
    TrainPolicies(Common),
    /// Print the plan for one task.
    Plan {
        #[command(flatten)]
        common: Common,
        /// Start configuration index (0, 1 or 2).
        #[arg(long)]
        start: usize,
        /// Goal index 0..12 or two colors, e.g. `red,blue`.
        #[arg(long)]
        goal: String,
        #[arg(long, value_parser = ["high-model", "bfs"])]
        planner: Option<String>,
        /// Also run the plan and print the per-edge trace.
        #[arg(long)]
        execute: bool,
    },
    /// Evaluate every seen and unseen task and write metrics.
    Eval(Common),
    /// Run an ablation next to the configured pipeline.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(value_enum)]
        which: Ablation,
    },
    /// Run every stage, then evaluate.
    RunAll(Common),
}

fn load_config(c: &Common) -> Result<RunConfig, CoreError> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Ok(seed) = std::env::var("HUBTOPO_SEED") {
        cfg.set("seed", seed.trim())?;
    }
    if let Ok(out) = std::env::var("HUBTOPO_OUT") {
        cfg.set("out", out.trim())?;
    }
    if let Some(out) = &c.out {
        cfg.out = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_goal(s: &str) -> Result<Goal, CoreError> {
    if let Ok(i) = s.parse::<usize>() {
        return Goal::all().get(i).copied().ok_or_else(|| CoreError::Config(format!("goal index {i} out of range")));
    }
    let colors: Vec<_> = s.split(',').map(|c| hubtopo_maze::Color::parse(c.trim())).collect();
    match colors.as_slice() {
        [Some(a), Some(b)] => Goal::new(*a, *b).map_err(|e| CoreError::Config(e.to_string())),
        _ => Err(CoreError::Config(format!("cannot parse goal {s:?}"))),
    }
}

fn pipeline(c: &Common) -> Result<Pipeline, CoreError> {
    let mut p = Pipeline::new(load_config(c)?);
    p.force = c.force;
    Ok(p)
}

fn run(cli: Cli) -> Result<(), CoreError> {
    match cli.command {
        Command::GenDemos(c) => pipeline(&c)?.run_stage("gen-demos"),
        Command::TrainLow(c) => pipeline(&c)?.run_stage("train-low"),
        Command::BuildTopology(c) => pipeline(&c)?.run_stage("build-topology"),
        Command::TrainHigh(c) => pipeline(&c)?.run_stage("train-high"),
        Command::TrainPolicies(c) => pipeline(&c)?.run_stage("train-policies"),
        Command::Eval(c) => {
            let p = pipeline(&c)?;
            let art = p.load()?;
            print!("{}", p.eval(&art)?.to_text());
            Ok(())
        }
        Command::RunAll(c) => {
            let (_, m) = pipeline(&c)?.run()?;
            print!("{}", m.to_text());
            Ok(())
        }
        Command::Plan { common, start, goal, planner, execute } => {
            let p = pipeline(&common)?;
            let goal = parse_goal(&goal)?;
            if start > 2 {
                return Err(CoreError::Config(format!("start index {start} out of range")));
            }
            let planner = planner.as_deref().and_then(PlannerKind::parse).unwrap_or(p.cfg.planner);
            let art = p.load()?;
            print!("{}", plan_task(&art, &p.cfg, planner, Task { start_id: start, goal }, execute)?);
            Ok(())
        }
        Command::Ablate { common, which } => {
            let p = pipeline(&common)?;
            match which {
                Ablation::Bfs => {
                    let r = ablate_bfs(&p.cfg)?;
                    println!("== high-model planner");
                    print!("{}", r.high_model.to_text());
                    println!("== breadth-first planner");
                    print!("{}", r.bfs.to_text());
                }
                Ablation::NoMemory => {
                    let (_, full) = p.run()?;
                    let mut cfg = no_memory_config(&p.cfg);
                    cfg.out = p.cfg.out.join("no-memory");
                    let (_, ablated) = Pipeline::new(cfg).run()?;
                    println!("hubs with memory {}, without {}", full.hubs, ablated.hubs);
                    print!("{}", ablated.to_text());
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hubtopo: {e}");
            match e {
                CoreError::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
