//! Best-first search over hub histories with the bottleneck cost
//! `C(H') = max(C(H), -ln P(h'|H)) + η`, and the breadth-first ablation.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::fmt::Write as _;

use crate::high::HubModel;
use crate::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub p_min: f64,
    pub eta: f64,
    /// Maximum number of hops in a history.
    pub max_depth: usize,
    /// Safety valve on queue pops; `usize::MAX` disables it.
    pub max_expansions: usize,
    /// Max-norm radius for matching latents to hubs; `None` uses the
    /// topology's ε.
    pub match_tolerance: Option<f64>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { p_min: 1e-3, eta: 0.01, max_depth: 64, max_expansions: 1_000_000, match_tolerance: None }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let tol_ok = self.match_tolerance.map_or(true, |t| t >= 0.0);
        if !(0.0..1.0).contains(&self.p_min) || !(self.eta >= 0.0) || self.max_depth == 0 || !tol_ok {
            return Err(CoreError::Config(format!(
                "search needs 0 <= p_min < 1, eta >= 0, depth >= 1 (got {}, {}, {})",
                self.p_min, self.eta, self.max_depth
            )));
        }
        Ok(())
    }
}

pub fn extend_cost(cost: f64, p: f64, eta: f64) -> f64 {
    cost.max(-p.ln()) + eta
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub hubs: Vec<usize>,
    /// Model probability of each transition; empty for breadth-first plans.
    pub probs: Vec<f64>,
    pub cost: f64,
}

impl Plan {
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.hubs.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn hops(&self) -> usize {
        self.hubs.len().saturating_sub(1)
    }

    pub fn dump(&self) -> String {
        let mut s = String::new();
        let hubs: Vec<String> = self.hubs.iter().map(usize::to_string).collect();
        let _ = writeln!(s, "hubs {}", hubs.join(" "));
        let _ = writeln!(s, "cost {}", self.cost);
        for (i, (a, b)) in self.edges().into_iter().enumerate() {
            match self.probs.get(i) {
                Some(p) => {
                    let _ = writeln!(s, "edge {a} {b} p {p}");
                }
                None => {
                    let _ = writeln!(s, "edge {a} {b}");
                }
            }
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoPlan {
    EmptyGoalSet,
    Exhausted,
    ExpansionLimit,
}

struct Entry<M> {
    cost: f64,
    hubs: Vec<usize>,
    probs: Vec<f64>,
    memory: M,
}

/// Lower cost, then fewer hubs, then lexicographically smaller ids first.
pub fn history_order(a: (f64, &[usize]), b: (f64, &[usize])) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.len().cmp(&b.1.len())).then_with(|| a.1.cmp(b.1))
}

impl<M> PartialEq for Entry<M> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<M> Eq for Entry<M> {}

impl<M> PartialOrd for Entry<M> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<M> Ord for Entry<M> {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        history_order((other.cost, &other.hubs), (self.cost, &self.hubs))
    }
}

/// Returns the first goal-reaching history removed from the queue.
pub fn search<M: HubModel>(
    model: &M,
    start: usize,
    goals: &[usize],
    cfg: &SearchConfig,
) -> std::result::Result<Plan, NoPlan> {
    if goals.is_empty() {
        return Err(NoPlan::EmptyGoalSet);
    }
    let mut queue = BinaryHeap::new();
    queue.push(Entry { cost: 0.0, hubs: vec![start], probs: Vec::new(), memory: model.begin(start) });
    let mut pops = 0usize;
    while let Some(e) = queue.pop() {
        let last = *e.hubs.last().expect("histories are non-empty");
        if goals.contains(&last) {
            return Ok(Plan { hubs: e.hubs, probs: e.probs, cost: e.cost });
        }
        pops += 1;
        if pops > cfg.max_expansions {
            return Err(NoPlan::ExpansionLimit);
        }
        if e.hubs.len() > cfg.max_depth {
            continue;
        }
        let dist = model.next_dist(&e.memory, last);
        for (next, &p) in dist.iter().enumerate() {
            if p <= 0.0 || p < cfg.p_min {
                continue;
            }
            let mut hubs = e.hubs.clone();
            hubs.push(next);
            let mut probs = e.probs.clone();
            probs.push(p);
            queue.push(Entry { cost: extend_cost(e.cost, p, cfg.eta), hubs, probs, memory: model.advance(&e.memory, next) });
        }
    }
    Err(NoPlan::Exhausted)
}

/// Fewest-hop path to any goal, ignoring probabilities. Neighbors are
/// expanded in ascending id order.
pub fn bfs_plan(successors: &[Vec<usize>], start: usize, goals: &[usize]) -> std::result::Result<Plan, NoPlan> {
    if goals.is_empty() {
        return Err(NoPlan::EmptyGoalSet);
    }
    let mut parent: Vec<Option<usize>> = vec![None; successors.len()];
    let mut seen = vec![false; successors.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(h) = queue.pop_front() {
        if goals.contains(&h) {
            let mut hubs = vec![h];
            while let Some(p) = parent[*hubs.last().expect("non-empty")] {
                hubs.push(p);
            }
            hubs.reverse();
            let cost = (hubs.len() - 1) as f64;
            return Ok(Plan { hubs, probs: Vec::new(), cost });
        }
        for &n in &successors[h] {
            if !seen[n] {
                seen[n] = true;
                parent[n] = Some(h);
                queue.push_back(n);
            }
        }
    }
    Err(NoPlan::Exhausted)
}
