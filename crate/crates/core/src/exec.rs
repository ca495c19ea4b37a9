//! Zero-shot inference: start-hub matching, goal-hub selection, planning,
//! and plan execution by chaining hub policies.

use std::fmt::Write as _;

use hubtopo_maze::{Action, Env, EnvState, Goal, Observation, StartConfig, HORIZON};

use crate::high::HighModel;
use crate::latent::{Encoder, HistoryBuffer};
use crate::policy::PolicyBank;
use crate::search::{bfs_plan, search, NoPlan, Plan, SearchConfig};
use crate::topology::BehaviorTopology;
use crate::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExecConfig {
    /// Per-edge step budget is `budget_factor` times the longest training
    /// segment of the edge, and at least `min_budget`.
    pub budget_factor: usize,
    pub min_budget: usize,
    pub horizon: u32,
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig { budget_factor: 3, min_budget: 20, horizon: HORIZON }
    }
}

impl ExecConfig {
    pub fn edge_budget(&self, topo: &BehaviorTopology, edge: (usize, usize)) -> usize {
        (self.budget_factor * topo.longest_segment(edge).unwrap_or(0)).max(self.min_budget)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FailureReason {
    /// An edge used up its step budget without reaching its target hub.
    HubTimeout,
    /// The source hub of an edge has no policy.
    DeadEdge,
    /// The environment ended the episode without success.
    EnvTerminal,
    NoPlan,
    /// Every edge was crossed but the goal is not satisfied.
    PlanEnded,
}

impl FailureReason {
    pub fn name(self) -> &'static str {
        match self {
            FailureReason::HubTimeout => "hub-timeout",
            FailureReason::DeadEdge => "dead-edge",
            FailureReason::EnvTerminal => "env-terminal",
            FailureReason::NoPlan => "no-plan",
            FailureReason::PlanEnded => "plan-ended",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeTrace {
    pub source: usize,
    pub target: usize,
    pub budget: usize,
    pub steps: usize,
    pub reached: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionResult {
    pub success: bool,
    pub steps: usize,
    pub edges_crossed: usize,
    pub trace: Vec<EdgeTrace>,
    pub failure: Option<FailureReason>,
}

impl ExecutionResult {
    pub fn no_plan() -> Self {
        ExecutionResult { success: false, steps: 0, edges_crossed: 0, trace: Vec::new(), failure: Some(FailureReason::NoPlan) }
    }

    pub fn dump(&self) -> String {
        let mut s = String::new();
        let failure = self.failure.map_or("none", FailureReason::name);
        let _ = writeln!(s, "success {} steps {} edges {} failure {failure}", self.success, self.steps, self.edges_crossed);
        for e in &self.trace {
            let _ = writeln!(s, "edge {} {} budget {} steps {} reached {}", e.source, e.target, e.budget, e.steps, e.reached);
        }
        s
    }
}

pub fn argmax(p: &[f64]) -> usize {
    p.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

/// Runs `plan` from the current environment state with greedy actions.
/// `history` must already hold the encoding of `obs`.
#[allow(clippy::too_many_arguments)]
pub fn execute(
    plan: &Plan,
    env: &Env,
    mut state: EnvState,
    mut obs: Observation,
    history: &mut HistoryBuffer,
    topo: &BehaviorTopology,
    bank: &PolicyBank,
    encoder: &Encoder,
    tolerance: f64,
    cfg: &ExecConfig,
) -> Result<ExecutionResult> {
    let mut result = ExecutionResult { success: false, steps: 0, edges_crossed: 0, trace: Vec::new(), failure: None };
    'edges: for (source, target) in plan.edges() {
        let budget = cfg.edge_budget(topo, (source, target));
        let mut trace = EdgeTrace { source, target, budget, steps: 0, reached: false };
        if !bank.has_policy(source) {
            result.trace.push(trace);
            result.failure = Some(FailureReason::DeadEdge);
            return Ok(result);
        }
        let mut memory = bank.new_memory(source)?;
        while trace.steps < budget {
            if state.step_count >= cfg.horizon {
                break;
            }
            let dist = bank.act(source, target, &obs, &mut memory)?;
            let action = Action::from_id(argmax(&dist)).ok_or_else(|| CoreError::InvalidInput("bad action id".into()))?;
            let tr = env.step(&state, action)?;
            state = tr.state;
            obs = tr.observation;
            trace.steps += 1;
            result.steps += 1;
            let z = encoder.encode(&state, &obs, history)?;
            if topo.match_hub(&z, tolerance) == Some(target) {
                trace.reached = true;
                result.edges_crossed += 1;
            }
            if state.terminal {
                result.trace.push(trace);
                result.success = state.success;
                if !state.success {
                    result.failure = Some(FailureReason::EnvTerminal);
                }
                return Ok(result);
            }
            if trace.reached {
                result.trace.push(trace);
                continue 'edges;
            }
        }
        result.trace.push(trace);
        result.failure = Some(FailureReason::HubTimeout);
        return Ok(result);
    }
    result.success = state.success;
    if !result.success {
        result.failure = Some(FailureReason::PlanEnded);
    }
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PlannerKind {
    HighModel,
    Bfs,
}

impl PlannerKind {
    pub fn name(self) -> &'static str {
        match self {
            PlannerKind::HighModel => "high-model",
            PlannerKind::Bfs => "bfs",
        }
    }

    pub fn parse(s: &str) -> Option<PlannerKind> {
        [PlannerKind::HighModel, PlannerKind::Bfs].into_iter().find(|p| p.name() == s)
    }
}

/// Everything needed to solve a task zero-shot.
#[derive(Debug, Clone, Copy)]
pub struct Agent<'a> {
    pub topology: &'a BehaviorTopology,
    pub high: &'a HighModel,
    pub bank: &'a PolicyBank,
    pub encoder: &'a Encoder,
    pub search: SearchConfig,
    pub exec: ExecConfig,
    pub planner: PlannerKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub start_hub: Option<usize>,
    pub goal_hubs: Vec<usize>,
    pub plan: Option<Plan>,
    pub result: ExecutionResult,
}

impl Agent<'_> {
    pub fn tolerance(&self) -> f64 {
        self.search.match_tolerance.unwrap_or(self.topology.epsilon)
    }

    pub fn plan(&self, start_hub: usize, goals: &[usize]) -> std::result::Result<Plan, NoPlan> {
        match self.planner {
            PlannerKind::HighModel => search(self.high, start_hub, goals, &self.search),
            PlannerKind::Bfs => bfs_plan(&self.topology.adjacency(), start_hub, goals),
        }
    }

    /// Resets `env`, matches the start hub, plans to the goal's success hubs
    /// and executes the plan.
    pub fn run(&self, env: &Env, start: StartConfig, goal: Goal) -> Result<Episode> {
        let (state, obs) = env.reset(start, goal)?;
        let mut history = self.encoder.new_history();
        let z0 = self.encoder.encode(&state, &obs, &mut history)?;
        let start_hub = self.topology.match_hub(&z0, self.tolerance());
        let goal_hubs = self.topology.goal_hubs(goal);
        let mut episode = Episode { start_hub, goal_hubs, plan: None, result: ExecutionResult::no_plan() };
        let Some(h0) = start_hub else { return Ok(episode) };
        let Ok(plan) = self.plan(h0, &episode.goal_hubs) else { return Ok(episode) };
        episode.result =
            execute(&plan, env, state, obs, &mut history, self.topology, self.bank, self.encoder, self.tolerance(), &self.exec)?;
        episode.plan = Some(plan);
        Ok(episode)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[1.0]), 0);
    }

    #[test]
    fn failure_names() {
        assert_eq!(FailureReason::HubTimeout.name(), "hub-timeout");
        assert_eq!(PlannerKind::parse("bfs"), Some(PlannerKind::Bfs));
        assert_eq!(PlannerKind::parse("dfs"), None);
    }
}
