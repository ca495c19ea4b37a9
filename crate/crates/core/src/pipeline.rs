//! Stage orchestration, artifact persistence, evaluation metrics and
//! ablations.
//!
//! Each stage writes its artifacts under the run directory and then a
//! marker `stages/<name>.done` holding a fingerprint of the settings it
//! depends on. A rerun reuses a stage whose marker matches.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hubtopo_maze::store::{load_dataset, save_dataset};
use hubtopo_maze::{build_dataset, DemoDataset, Env, Goal, Maze, Task, Trajectory};
use hubtopo_nn::io::{load_params_of_kind, save_params, ParamHeader};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{EncoderKind, RunConfig};
use crate::exec::{Agent, Episode, PlannerKind};
use crate::high::{self, train_high, HighModel};
use crate::latent::{Encoder, OracleEncoder};
use crate::lowlevel::{self, train_low_level, LowLevelModel};
use crate::policy::PolicyBank;
use crate::topology::{BehaviorTopology, LatentTrajectory};
use crate::{CoreError, Result};

pub const STAGES: [&str; 6] = ["gen-demos", "train-low", "build-topology", "train-high", "train-policies", "eval"];

pub fn maze_env(name: &str) -> Result<Env> {
    match name {
        "desk" => Ok(Env::desk()),
        "shortcut" => Ok(Env::new(Maze::shortcut())),
        _ => Err(CoreError::Config(format!("maze: unknown {name:?}"))),
    }
}

/// Whether `key` influences the output of `stage`.
fn stage_depends_on(stage: &str, key: &str) -> bool {
    let upto = STAGES.iter().position(|s| *s == stage).unwrap_or(STAGES.len() - 1);
    let owner = match key {
        "seed" | "maze" => 0,
        "encoder" | "latent_dim" | "history_len" => 1,
        k if k.starts_with("low.") => 1,
        "oracle_mode" | "epsilon" => 2,
        k if k.starts_with("high.") => 3,
        k if k.starts_with("policy.") => 4,
        "out" => usize::MAX,
        _ => 5,
    };
    owner <= upto
}

fn stage_err(stage: &str, e: impl std::fmt::Display) -> CoreError {
    CoreError::Stage { stage: stage.into(), message: e.to_string() }
}

/// Paths of every artifact inside a run directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunDir(pub PathBuf);

impl RunDir {
    pub fn demos(&self) -> PathBuf {
        self.0.join("demos")
    }
    pub fn low(&self) -> PathBuf {
        self.0.join("lowlevel.htnn")
    }
    pub fn topology(&self) -> PathBuf {
        self.0.join("topology.txt")
    }
    pub fn high(&self) -> PathBuf {
        self.0.join("highlevel.htnn")
    }
    pub fn policies(&self) -> PathBuf {
        self.0.join("policies")
    }
    pub fn logs(&self) -> PathBuf {
        self.0.join("logs")
    }
    fn marker(&self, stage: &str) -> PathBuf {
        self.0.join("stages").join(format!("{stage}.done"))
    }
}

/// Everything produced by the training stages.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub env: Env,
    pub dataset: DemoDataset,
    pub low: Option<LowLevelModel>,
    pub encoder: Encoder,
    pub topology: BehaviorTopology,
    pub high: HighModel,
    pub bank: PolicyBank,
}

impl Artifacts {
    pub fn agent(&self, cfg: &RunConfig, planner: PlannerKind) -> Agent<'_> {
        Agent {
            topology: &self.topology,
            high: &self.high,
            bank: &self.bank,
            encoder: &self.encoder,
            search: cfg.search,
            exec: cfg.exec,
            planner,
        }
    }
}

pub struct Pipeline {
    pub cfg: RunConfig,
    pub dir: RunDir,
    /// Ignore stage markers and rebuild everything.
    pub force: bool,
}

impl Pipeline {
    pub fn new(cfg: RunConfig) -> Self {
        let dir = RunDir(cfg.out.clone());
        Pipeline { cfg, dir, force: false }
    }

    fn fingerprint(&self, stage: &str) -> String {
        format!("{:08x}", self.cfg.fingerprint(|k| stage_depends_on(stage, k)))
    }

    pub fn is_done(&self, stage: &str) -> bool {
        !self.force
            && std::fs::read_to_string(self.dir.marker(stage)).is_ok_and(|m| m.trim() == self.fingerprint(stage))
    }

    fn mark_done(&self, stage: &str) -> Result<()> {
        let path = self.dir.marker(stage);
        std::fs::create_dir_all(path.parent().expect("marker has a parent"))?;
        std::fs::write(path, self.fingerprint(stage) + "\n")?;
        Ok(())
    }

    fn write_log(&self, name: &str, text: &str) -> Result<()> {
        std::fs::create_dir_all(self.dir.logs())?;
        std::fs::write(self.dir.logs().join(name), text)?;
        Ok(())
    }

    /// Requires an up-to-date marker for `stage`.
    fn require(&self, stage: &str) -> Result<()> {
        if std::fs::read_to_string(self.dir.marker(stage)).is_ok_and(|m| m.trim() == self.fingerprint(stage)) {
            Ok(())
        } else {
            Err(stage_err(stage, format!("missing or stale artifacts in {}; run this stage first", self.dir.0.display())))
        }
    }

    pub fn env(&self) -> Result<Env> {
        maze_env(&self.cfg.maze)
    }

    pub fn gen_demos(&self) -> Result<DemoDataset> {
        const S: &str = "gen-demos";
        if self.is_done(S) {
            return load_dataset(&self.dir.demos()).map_err(|e| stage_err(S, e));
        }
        let ds = build_dataset(&self.env()?, self.cfg.seed).map_err(|e| stage_err(S, e))?;
        save_dataset(&self.dir.demos(), &ds).map_err(|e| stage_err(S, e))?;
        self.mark_done(S)?;
        Ok(ds)
    }

    fn load_demos(&self) -> Result<DemoDataset> {
        self.require("gen-demos")?;
        load_dataset(&self.dir.demos()).map_err(|e| stage_err("gen-demos", e))
    }

    /// `None` in oracle mode.
    pub fn train_low(&self, ds: &DemoDataset) -> Result<Option<LowLevelModel>> {
        const S: &str = "train-low";
        if self.cfg.encoder == EncoderKind::Oracle {
            self.mark_done(S)?;
            return Ok(None);
        }
        if self.is_done(S) {
            return self.load_low().map(Some);
        }
        let all: Vec<&Trajectory> = ds.trajectories().collect();
        let take = match self.cfg.low_max_trajectories {
            0 => all.len(),
            n => n.min(all.len()),
        };
        let (model, log) = train_low_level(&all[..take], &self.cfg.low_config()).map_err(|e| stage_err(S, e))?;
        save_params(&self.dir.low(), &ParamHeader { kind: lowlevel::KIND.into(), tag: 0 }, &model.params)
            .map_err(|e| stage_err(S, e))?;
        self.write_log("train-low.txt", &log.to_text())?;
        self.mark_done(S)?;
        Ok(Some(model))
    }

    fn load_low(&self) -> Result<LowLevelModel> {
        let (_, ps) = load_params_of_kind(&self.dir.low(), lowlevel::KIND).map_err(|e| stage_err("train-low", e))?;
        LowLevelModel::from_params(ps).map_err(|e| stage_err("train-low", e))
    }

    pub fn encoder(&self, low: Option<LowLevelModel>) -> Result<Encoder> {
        match (self.cfg.encoder, low) {
            (EncoderKind::Oracle, _) => Ok(Encoder::Oracle(OracleEncoder {
                mode: self.cfg.oracle_mode,
                epsilon: self.cfg.epsilon,
                dim: self.cfg.latent_dim,
            })),
            (EncoderKind::Learned, Some(m)) => Ok(Encoder::Learned(Box::new(m))),
            (EncoderKind::Learned, None) => Err(stage_err("train-low", "learned encoder requested but not trained")),
        }
    }

    pub fn build_topology(&self, env: &Env, ds: &DemoDataset, encoder: &Encoder) -> Result<BehaviorTopology> {
        const S: &str = "build-topology";
        if self.is_done(S) {
            return BehaviorTopology::load(&self.dir.topology()).map_err(|e| stage_err(S, e));
        }
        let latents = encode_dataset(env, ds, encoder).map_err(|e| stage_err(S, e))?;
        let topo = BehaviorTopology::build(&latents, self.cfg.epsilon).map_err(|e| stage_err(S, e))?;
        topo.save(&self.dir.topology()).map_err(|e| stage_err(S, e))?;
        self.mark_done(S)?;
        Ok(topo)
    }

    pub fn train_high(&self, topo: &BehaviorTopology) -> Result<HighModel> {
        const S: &str = "train-high";
        if self.is_done(S) {
            return self.load_high(topo);
        }
        let (model, log) = train_high(topo, &self.cfg.high_config()).map_err(|e| stage_err(S, e))?;
        save_params(&self.dir.high(), &ParamHeader { kind: high::KIND.into(), tag: 0 }, &model.params)
            .map_err(|e| stage_err(S, e))?;
        let text: String = log.iter().enumerate().map(|(e, l)| format!("epoch {e} loss {l}\n")).collect();
        self.write_log("train-high.txt", &text)?;
        self.mark_done(S)?;
        Ok(model)
    }

    fn load_high(&self, topo: &BehaviorTopology) -> Result<HighModel> {
        let (_, ps) = load_params_of_kind(&self.dir.high(), high::KIND).map_err(|e| stage_err("train-high", e))?;
        HighModel::from_params(ps, topo.adjacency()).map_err(|e| stage_err("train-high", e))
    }

    pub fn train_policies(&self, topo: &BehaviorTopology, ds: &DemoDataset, high: &HighModel) -> Result<PolicyBank> {
        const S: &str = "train-policies";
        if self.is_done(S) {
            return PolicyBank::load(&self.dir.policies()).map_err(|e| stage_err(S, e));
        }
        let trajs: Vec<&Trajectory> = ds.trajectories().collect();
        let (bank, log) =
            PolicyBank::train(topo, &trajs, high.embeddings(), &self.cfg.policy_config()).map_err(|e| stage_err(S, e))?;
        bank.save(&self.dir.policies()).map_err(|e| stage_err(S, e))?;
        self.write_log("train-policies.txt", &log.to_text())?;
        self.mark_done(S)?;
        Ok(bank)
    }

    fn load_encoder(&self) -> Result<Encoder> {
        self.require("train-low")?;
        let low = match self.cfg.encoder {
            EncoderKind::Oracle => None,
            EncoderKind::Learned => Some(self.load_low()?),
        };
        self.encoder(low)
    }

    fn load_topology(&self) -> Result<BehaviorTopology> {
        self.require("build-topology")?;
        BehaviorTopology::load(&self.dir.topology()).map_err(|e| stage_err("build-topology", e))
    }

    /// Runs one stage from the persisted outputs of the stages before it.
    pub fn run_stage(&self, stage: &str) -> Result<()> {
        std::fs::create_dir_all(&self.dir.0)?;
        match stage {
            "gen-demos" => {
                self.gen_demos()?;
            }
            "train-low" => {
                let ds = self.load_demos()?;
                self.train_low(&ds)?;
            }
            "build-topology" => {
                let ds = self.load_demos()?;
                let encoder = self.load_encoder()?;
                self.build_topology(&self.env()?, &ds, &encoder)?;
            }
            "train-high" => {
                let topo = self.load_topology()?;
                self.train_high(&topo)?;
            }
            "train-policies" => {
                let ds = self.load_demos()?;
                let topo = self.load_topology()?;
                self.require("train-high")?;
                let high = self.load_high(&topo)?;
                self.train_policies(&topo, &ds, &high)?;
            }
            "eval" => {
                let art = self.load()?;
                self.eval(&art)?;
            }
            other => return Err(CoreError::Config(format!("unknown stage {other:?}"))),
        }
        Ok(())
    }

    /// Runs (or resumes) every training stage.
    pub fn build(&self) -> Result<Artifacts> {
        std::fs::create_dir_all(&self.dir.0)?;
        std::fs::write(self.dir.0.join("config.txt"), self.cfg.to_text())?;
        let env = self.env()?;
        let dataset = self.gen_demos()?;
        let low = self.train_low(&dataset)?;
        let encoder = self.encoder(low.clone())?;
        let topology = self.build_topology(&env, &dataset, &encoder)?;
        let high = self.train_high(&topology)?;
        let bank = self.train_policies(&topology, &dataset, &high)?;
        Ok(Artifacts { env, dataset, low, encoder, topology, high, bank })
    }

    /// Loads finished artifacts without training anything.
    pub fn load(&self) -> Result<Artifacts> {
        let env = self.env()?;
        let dataset = self.load_demos()?;
        let encoder = self.load_encoder()?;
        let low = match &encoder {
            Encoder::Learned(m) => Some((**m).clone()),
            Encoder::Oracle(_) => None,
        };
        let topology = self.load_topology()?;
        self.require("train-high")?;
        let high = self.load_high(&topology)?;
        self.require("train-policies")?;
        let bank = PolicyBank::load(&self.dir.policies()).map_err(|e| stage_err("train-policies", e))?;
        Ok(Artifacts { env, dataset, low, encoder, topology, high, bank })
    }

    /// Evaluates every seen and unseen task and writes the metrics files.
    pub fn eval(&self, art: &Artifacts) -> Result<Metrics> {
        let metrics = evaluate(art, &self.cfg, self.cfg.planner).map_err(|e| stage_err("eval", e))?;
        metrics.save(&self.dir.0, "metrics")?;
        self.mark_done("eval")?;
        Ok(metrics)
    }

    pub fn run(&self) -> Result<(Artifacts, Metrics)> {
        let art = self.build()?;
        let m = self.eval(&art)?;
        Ok((art, m))
    }
}

/// Encodes every demonstration in trajectory-id order.
pub fn encode_dataset(env: &Env, ds: &DemoDataset, encoder: &Encoder) -> Result<Vec<LatentTrajectory>> {
    ds.trajectories()
        .map(|t| {
            Ok(LatentTrajectory { latents: encoder.encode_trajectory(env, t)?, goal: t.task.goal, success: t.success })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub split: String,
    pub start: usize,
    pub goal: String,
    pub goal_index: usize,
    pub start_hub: Option<usize>,
    pub plan: Option<Vec<usize>>,
    pub plan_cost: Option<f64>,
    pub success: bool,
    pub steps: usize,
    pub edges: usize,
    pub failure: Option<String>,
}

impl TaskRecord {
    fn from_episode(split: &str, task: Task, ep: &Episode) -> Self {
        TaskRecord {
            split: split.into(),
            start: task.start_id,
            goal: task.goal.to_string(),
            goal_index: task.goal.index(),
            start_hub: ep.start_hub,
            plan: ep.plan.as_ref().map(|p| p.hubs.clone()),
            plan_cost: ep.plan.as_ref().map(|p| p.cost),
            success: ep.result.success,
            steps: ep.result.steps,
            edges: ep.result.edges_crossed,
            failure: ep.result.failure.map(|f| f.name().to_string()),
        }
    }
}

/// Aggregates over one split. Means are over successful episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub tasks: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_edges: Option<f64>,
    pub mean_steps: Option<f64>,
    pub actions_per_edge: Option<f64>,
}

impl SplitSummary {
    pub fn from_records<'a>(records: impl Iterator<Item = &'a TaskRecord>) -> Self {
        let (mut tasks, mut successes, mut edges, mut steps) = (0usize, 0usize, 0usize, 0usize);
        for r in records {
            tasks += 1;
            if r.success {
                successes += 1;
                edges += r.edges;
                steps += r.steps;
            }
        }
        let mean = |total: usize| (successes > 0).then(|| total as f64 / successes as f64);
        SplitSummary {
            tasks,
            successes,
            success_rate: if tasks == 0 { 0.0 } else { successes as f64 / tasks as f64 },
            mean_edges: mean(edges),
            mean_steps: mean(steps),
            actions_per_edge: (edges > 0).then(|| steps as f64 / edges as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub planner: String,
    pub hubs: usize,
    pub edges: usize,
    pub seen: SplitSummary,
    pub unseen: SplitSummary,
    /// Total steps over total edges crossed, over successes of both splits.
    pub actions_per_edge: Option<f64>,
    pub tasks: Vec<TaskRecord>,
}

impl Metrics {
    pub fn from_tasks(planner: &str, hubs: usize, edges: usize, tasks: Vec<TaskRecord>) -> Self {
        let seen = SplitSummary::from_records(tasks.iter().filter(|r| r.split == "seen"));
        let unseen = SplitSummary::from_records(tasks.iter().filter(|r| r.split == "unseen"));
        let all = SplitSummary::from_records(tasks.iter());
        Metrics { planner: planner.into(), hubs, edges, seen, unseen, actions_per_edge: all.actions_per_edge, tasks }
    }

    /// Whether the aggregates equal a recomputation from the task table.
    pub fn is_consistent(&self) -> bool {
        *self == Metrics::from_tasks(&self.planner, self.hubs, self.edges, self.tasks.clone())
    }

    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        let mut s = String::new();
        let _ = writeln!(s, "planner {}  hubs {}  edges {}", self.planner, self.hubs, self.edges);
        let _ = writeln!(s, "split   tasks  success  rate    mean_edges  mean_steps  actions/edge");
        for (name, sp) in [("seen", &self.seen), ("unseen", &self.unseen)] {
            let _ = writeln!(
                s,
                "{name:<7} {:>5}  {:>7}  {:.4}  {:>10}  {:>10}  {:>12}",
                sp.tasks,
                sp.successes,
                sp.success_rate,
                opt(sp.mean_edges),
                opt(sp.mean_steps),
                opt(sp.actions_per_edge)
            );
        }
        let _ = writeln!(s, "actions per edge (all successes): {}", opt(self.actions_per_edge));
        let _ = writeln!(s);
        let _ = writeln!(s, "split   start goal           success steps edges start_hub failure       plan");
        for r in &self.tasks {
            let plan = r.plan.as_ref().map_or("-".to_string(), |p| p.iter().map(usize::to_string).collect::<Vec<_>>().join(" "));
            let _ = writeln!(
                s,
                "{:<7} {:>5} {:<14} {:<7} {:>5} {:>5} {:>9} {:<13} {plan}",
                r.split,
                r.start,
                r.goal,
                r.success,
                r.steps,
                r.edges,
                r.start_hub.map_or("-".to_string(), |h| h.to_string()),
                r.failure.as_deref().unwrap_or("-"),
            );
        }
        s
    }

    /// Writes `<stem>.txt` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.txt")), self.to_text())?;
        let json = serde_json::to_string_pretty(self).map_err(|e| CoreError::Format(e.to_string()))?;
        std::fs::write(dir.join(format!("{stem}.json")), json + "\n")?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| CoreError::Format(e.to_string()))
    }
}

/// One episode per seen and unseen task, in dataset order.
pub fn evaluate(art: &Artifacts, cfg: &RunConfig, planner: PlannerKind) -> Result<Metrics> {
    let agent = art.agent(cfg, planner);
    let tasks: Vec<(&str, Task)> = art
        .dataset
        .seen
        .iter()
        .map(|&t| ("seen", t))
        .chain(art.dataset.unseen.iter().map(|&t| ("unseen", t)))
        .collect();
    let records = tasks
        .par_iter()
        .map(|&(split, task)| {
            let ep = agent.run(&art.env, task.start(), task.goal)?;
            Ok(TaskRecord::from_episode(split, task, &ep))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Metrics::from_tasks(planner.name(), art.topology.hub_count(), art.topology.edge_count(), records))
}

/// Prints the plan for `task`; with `execute` the episode is also run and
/// its per-edge trace appended.
pub fn plan_task(art: &Artifacts, cfg: &RunConfig, planner: PlannerKind, task: Task, execute: bool) -> Result<String> {
    let agent = art.agent(cfg, planner);
    let (state, obs) = art.env.reset(task.start(), task.goal)?;
    let mut history = art.encoder.new_history();
    let z = art.encoder.encode(&state, &obs, &mut history)?;
    let mut s = String::new();
    let Some(h0) = art.topology.match_hub(&z, agent.tolerance()) else {
        return Ok("no start hub within tolerance\n".into());
    };
    let goals = art.topology.goal_hubs(task.goal);
    let _ = writeln!(s, "start_hub {h0}");
    let _ = writeln!(s, "goal_hubs {}", goals.iter().map(usize::to_string).collect::<Vec<_>>().join(" "));
    match agent.plan(h0, &goals) {
        Ok(p) => s.push_str(&p.dump()),
        Err(e) => {
            let _ = writeln!(s, "no plan: {e:?}");
        }
    }
    if execute {
        s.push_str(&agent.run(&art.env, task.start(), task.goal)?.result.dump());
    }
    Ok(s)
}

/// Outcome of the planner ablation: the same artifacts evaluated with the
/// hub dynamics model and with breadth-first planning.
#[derive(Debug, Clone, PartialEq)]
pub struct BfsAblation {
    pub high_model: Metrics,
    pub bfs: Metrics,
}

pub fn ablate_bfs(cfg: &RunConfig) -> Result<BfsAblation> {
    let p = Pipeline::new(cfg.clone());
    let art = p.build()?;
    let high_model = evaluate(&art, cfg, PlannerKind::HighModel)?;
    let bfs = evaluate(&art, cfg, PlannerKind::Bfs)?;
    high_model.save(&p.dir.0, "ablate-bfs-high-model")?;
    bfs.save(&p.dir.0, "ablate-bfs")?;
    Ok(BfsAblation { high_model, bfs })
}

/// The memoryless variant of `cfg`: the pose-only oracle, or a learned
/// encoder without its recurrent memory.
pub fn no_memory_config(cfg: &RunConfig) -> RunConfig {
    let mut c = cfg.clone();
    match c.encoder {
        EncoderKind::Oracle => c.oracle_mode = crate::latent::OracleMode::PoseOnly,
        EncoderKind::Learned => c.low.memory = false,
    }
    c
}

pub fn ablate_no_memory(cfg: &RunConfig) -> Result<Metrics> {
    let c = no_memory_config(cfg);
    let p = Pipeline::new(c);
    let (_, m) = p.run()?;
    Ok(m)
}

/// Goal indices whose goal has at least one successful demonstration.
pub fn demonstrated_goals(ds: &DemoDataset) -> Vec<Goal> {
    let mut goals: Vec<Goal> = ds.successes.iter().map(|t| t.task.goal).collect();
    goals.sort();
    goals.dedup();
    goals
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_dependencies_accumulate() {
        assert!(stage_depends_on("gen-demos", "seed"));
        assert!(!stage_depends_on("gen-demos", "epsilon"));
        assert!(stage_depends_on("build-topology", "epsilon"));
        assert!(!stage_depends_on("train-high", "policy.lr"));
        assert!(stage_depends_on("train-policies", "high.lr"));
        assert!(stage_depends_on("eval", "search.eta"));
        assert!(!stage_depends_on("eval", "out"));
    }

    #[test]
    fn summaries_recompute_from_records() {
        let rec = |split: &str, success, steps, edges| TaskRecord {
            split: split.into(),
            start: 0,
            goal: "x".into(),
            goal_index: 0,
            start_hub: Some(0),
            plan: None,
            plan_cost: None,
            success,
            steps,
            edges,
            failure: None,
        };
        let m = Metrics::from_tasks(
            "high-model",
            3,
            2,
            vec![rec("seen", true, 40, 5), rec("seen", false, 9, 1), rec("unseen", true, 20, 3)],
        );
        assert_eq!(m.seen.successes, 1);
        assert_eq!(m.seen.mean_steps, Some(40.0));
        assert_eq!(m.unseen.actions_per_edge, Some(20.0 / 3.0));
        assert_eq!(m.actions_per_edge, Some(60.0 / 8.0));
        assert!(m.is_consistent());
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<Metrics>(&json).unwrap(), m);
    }
}
