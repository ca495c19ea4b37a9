//! Scripted expert demonstrations and the seen/unseen task split.

use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::{direction, offset, Action, Env, EnvState, Goal, StartConfig};
use crate::map::{door_requirements, Color, Pos};
use crate::raster::Observation;
use crate::MazeError;

pub const FAILURES_PER_GOAL: usize = 13;
pub const SAMPLED_FAILURES: usize = 120;

/// One task: a start index into [`StartConfig::standard`] and a goal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Task {
    pub start_id: usize,
    pub goal: Goal,
}

impl Task {
    pub fn start(&self) -> StartConfig {
        StartConfig::standard()[self.start_id]
    }
}

/// Seen and held-out tasks. Start 0 gets goals 0..=5, start 1 gets 4..=9 and
/// start 2 gets 8..=11, 0, 1; the other six goals of each start are unseen.
pub fn seen_unseen_split() -> (Vec<Task>, Vec<Task>) {
    let goals = Goal::all();
    let mut seen = Vec::new();
    let mut unseen = Vec::new();
    for start_id in 0..3 {
        let first = 4 * start_id;
        let assigned: Vec<usize> = (first..first + 6).map(|g| g % 12).collect();
        for (gi, &goal) in goals.iter().enumerate() {
            let task = Task { start_id, goal };
            if assigned.contains(&gi) {
                seen.push(task);
            } else {
                unseen.push(task);
            }
        }
    }
    (seen, unseen)
}

/// A recorded episode. `observations` has one more entry than `actions`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub task: Task,
    pub observations: Vec<Observation>,
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
    pub success: bool,
    /// Failure script that produced this episode, if any.
    pub failure: Option<FailureSpec>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Re-simulates the actions and returns every visited state.
    /// Fails if any observation or the outcome differs from the record.
    pub fn replay(&self, env: &Env) -> Result<Vec<EnvState>, MazeError> {
        let (mut s, obs) = env.reset(self.task.start(), self.task.goal)?;
        if self.observations.first() != Some(&obs) {
            return Err(MazeError::Replay("initial observation differs".into()));
        }
        let mut states = vec![s.clone()];
        for (t, &a) in self.actions.iter().enumerate() {
            let tr = env.step(&s, a)?;
            if tr.observation != self.observations[t + 1] {
                return Err(MazeError::Replay(format!("observation {} differs", t + 1)));
            }
            if tr.reward != self.rewards[t] {
                return Err(MazeError::Replay(format!("reward {t} differs")));
            }
            s = tr.state;
            states.push(s.clone());
        }
        if !s.terminal || s.success != self.success {
            return Err(MazeError::Replay("episode outcome differs".into()));
        }
        Ok(states)
    }
}

/// Canonical mistakes injected into a seen task's script.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FailureSpec {
    /// Bring a key the door does not accept. `door` is 0 or 1 (first or
    /// second requested diamond); `stage` 0 tries before any correct key,
    /// stage 1 after the first correct key.
    WrongKey { door: u8, stage: u8, key: Color },
    /// Deposit the second requested diamond first.
    SecondFirst,
    /// Deposit a diamond outside the goal first.
    UnrelatedFirst(Color),
    /// Deposit the first diamond correctly, then one outside the goal.
    UnrelatedAfterCorrect(Color),
}

impl FailureSpec {
    pub fn describe(&self) -> String {
        match self {
            FailureSpec::WrongKey { door, stage, key } => format!("wrong_key door={door} stage={stage} key={key}"),
            FailureSpec::SecondFirst => "second_first".into(),
            FailureSpec::UnrelatedFirst(c) => format!("unrelated_first color={c}"),
            FailureSpec::UnrelatedAfterCorrect(c) => format!("unrelated_after_correct color={c}"),
        }
    }

    pub fn parse(s: &str) -> Option<FailureSpec> {
        let mut parts = s.split_whitespace();
        let kind = parts.next()?;
        let fields: Vec<(&str, &str)> = parts.filter_map(|p| p.split_once('=')).collect();
        let get = |k: &str| fields.iter().find(|(n, _)| *n == k).map(|(_, v)| *v);
        match kind {
            "wrong_key" => Some(FailureSpec::WrongKey {
                door: get("door")?.parse().ok()?,
                stage: get("stage")?.parse().ok()?,
                key: Color::parse(get("key")?)?,
            }),
            "second_first" => Some(FailureSpec::SecondFirst),
            "unrelated_first" => Some(FailureSpec::UnrelatedFirst(Color::parse(get("color")?)?)),
            "unrelated_after_correct" => Some(FailureSpec::UnrelatedAfterCorrect(Color::parse(get("color")?)?)),
            _ => None,
        }
    }
}

/// The 13 failure scripts for a goal: 8 wrong-key attempts (2 doors × 2
/// stages × 2 keys the door rejects), 1 second-first deposit, and 2 each of
/// unrelated-first and unrelated-after-correct deposits.
pub fn enumerate_failure_specs(goal: Goal) -> Vec<FailureSpec> {
    let mut specs = Vec::with_capacity(FAILURES_PER_GOAL);
    for (door, diamond) in goal.colors().into_iter().enumerate() {
        let (a, b) = door_requirements(diamond);
        for stage in 0..2u8 {
            for key in Color::ALL.into_iter().filter(|&k| k != a && k != b) {
                specs.push(FailureSpec::WrongKey { door: door as u8, stage, key });
            }
        }
    }
    specs.push(FailureSpec::SecondFirst);
    let unrelated: Vec<Color> = Color::ALL.into_iter().filter(|c| !goal.colors().contains(c)).collect();
    specs.extend(unrelated.iter().map(|&c| FailureSpec::UnrelatedFirst(c)));
    specs.extend(unrelated.iter().map(|&c| FailureSpec::UnrelatedAfterCorrect(c)));
    specs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Subgoal {
    FetchKey(Color),
    ApplyKey(Color),
    FetchDiamond(Color),
    Deposit,
}

fn collect_and_deposit(diamond: Color) -> Vec<Subgoal> {
    let (a, b) = door_requirements(diamond);
    vec![
        Subgoal::FetchKey(a),
        Subgoal::ApplyKey(diamond),
        Subgoal::FetchKey(b),
        Subgoal::ApplyKey(diamond),
        Subgoal::FetchDiamond(diamond),
        Subgoal::Deposit,
    ]
}

fn success_script(goal: Goal) -> Vec<Subgoal> {
    goal.colors().into_iter().flat_map(collect_and_deposit).collect()
}

fn failure_script(goal: Goal, spec: FailureSpec) -> Vec<Subgoal> {
    match spec {
        FailureSpec::WrongKey { door, stage, key } => {
            let mut script = success_script(goal);
            // index of the FetchKey subgoal being replaced
            let cut = door as usize * 6 + stage as usize * 2;
            script.truncate(cut);
            script.push(Subgoal::FetchKey(key));
            script.push(Subgoal::ApplyKey(goal.colors()[door as usize]));
            script
        }
        FailureSpec::SecondFirst => collect_and_deposit(goal.second),
        FailureSpec::UnrelatedFirst(c) => collect_and_deposit(c),
        FailureSpec::UnrelatedAfterCorrect(c) => {
            let mut s = collect_and_deposit(goal.first);
            s.extend(collect_and_deposit(c));
            s
        }
    }
}

/// Breadth-first distances to the set of cells from which `target` can be faced.
fn distance_field(env: &Env, state: &EnvState, target: Pos) -> Vec<Option<u32>> {
    let maze = &env.maze;
    let (w, h) = (maze.width(), maze.height());
    let idx = |p: Pos| (p.1 * w + p.0) as usize;
    let mut dist = vec![None; (w * h) as usize];
    let mut queue = VecDeque::new();
    for o in [1u8, 0, 3, 2] {
        let d = direction(o);
        let p = (target.0 - d.0, target.1 - d.1);
        if env.walkable(state, p) && dist[idx(p)].is_none() {
            dist[idx(p)] = Some(0);
            queue.push_back(p);
        }
    }
    while let Some(p) = queue.pop_front() {
        let dp = dist[idx(p)].expect("queued cells have a distance");
        for o in [1u8, 0, 3, 2] {
            let n = offset(p, direction(o));
            if env.walkable(state, n) && dist[idx(n)].is_none() {
                dist[idx(n)] = Some(dp + 1);
                queue.push_back(n);
            }
        }
    }
    dist
}

fn turn_towards(from: u8, to: u8) -> Vec<Action> {
    match (to + 4 - from) % 4 {
        0 => vec![],
        1 => vec![Action::TurnLeft],
        3 => vec![Action::TurnRight],
        _ => vec![Action::TurnRight, Action::TurnRight],
    }
}

/// Actions that walk to a cell next to `target` and turn to face it.
/// Moves descend the distance field, trying up, right, down, left in order.
fn goto_face(env: &Env, state: &EnvState, target: Pos) -> Result<Vec<Action>, MazeError> {
    let w = env.maze.width();
    let dist = distance_field(env, state, target);
    let at = |p: Pos| -> Option<u32> {
        if env.maze.in_bounds(p) {
            dist[(p.1 * w + p.0) as usize]
        } else {
            None
        }
    };
    let mut pos = state.pos;
    let mut orient = state.orientation;
    let mut actions = Vec::new();
    let mut d = at(pos).ok_or(MazeError::Unreachable(target))?;
    while d > 0 {
        let next = [1u8, 0, 3, 2]
            .into_iter()
            .find(|&o| at(offset(pos, direction(o))) == Some(d - 1))
            .expect("distance field has a descending neighbor");
        actions.extend(turn_towards(orient, next));
        actions.push(Action::Forward);
        orient = next;
        pos = offset(pos, direction(next));
        d -= 1;
    }
    let face = (0..4u8)
        .find(|&o| offset(pos, direction(o)) == target)
        .expect("final cell is adjacent to the target");
    actions.extend(turn_towards(orient, face));
    Ok(actions)
}

fn subgoal_actions(env: &Env, state: &EnvState, sub: Subgoal) -> Result<Vec<Action>, MazeError> {
    let m = &env.maze;
    let (target, last) = match sub {
        Subgoal::FetchKey(c) => (m.key_slot(c), Action::Pickup),
        Subgoal::ApplyKey(d) => (m.door(d), Action::Toggle),
        Subgoal::FetchDiamond(c) => (m.diamond_slot(c), Action::Pickup),
        Subgoal::Deposit => (m.barrel(), Action::Toggle),
    };
    let mut actions = goto_face(env, state, target)?;
    actions.push(last);
    Ok(actions)
}

fn run_script(env: &Env, task: Task, script: &[Subgoal], failure: Option<FailureSpec>) -> Result<Trajectory, MazeError> {
    let (mut state, obs) = env.reset(task.start(), task.goal)?;
    let mut traj = Trajectory {
        task,
        observations: vec![obs],
        actions: Vec::new(),
        rewards: Vec::new(),
        success: false,
        failure,
    };
    for &sub in script {
        for a in subgoal_actions(env, &state, sub)? {
            if state.terminal {
                return Err(MazeError::Script(format!("{task:?}: episode ended before {sub:?}")));
            }
            let tr = env.step(&state, a)?;
            traj.actions.push(a);
            traj.rewards.push(tr.reward);
            traj.observations.push(tr.observation);
            state = tr.state;
        }
    }
    if !state.terminal {
        return Err(MazeError::Script(format!("{task:?}: script finished without ending the episode")));
    }
    traj.success = state.success;
    Ok(traj)
}

pub fn generate_success_demo(env: &Env, task: Task) -> Result<Trajectory, MazeError> {
    let t = run_script(env, task, &success_script(task.goal), None)?;
    if !t.success {
        return Err(MazeError::Script(format!("{task:?}: expert did not succeed")));
    }
    Ok(t)
}

pub fn generate_failure_demo(env: &Env, task: Task, spec: FailureSpec) -> Result<Trajectory, MazeError> {
    if !enumerate_failure_specs(task.goal).contains(&spec) {
        return Err(MazeError::Script(format!("{spec:?} is not a failure of goal {}", task.goal)));
    }
    let t = run_script(env, task, &failure_script(task.goal, spec), Some(spec))?;
    if t.success {
        return Err(MazeError::Script(format!("{task:?}: failure script {spec:?} succeeded")));
    }
    Ok(t)
}

/// Demonstrations plus the task split they were drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoDataset {
    pub seed: u64,
    pub seen: Vec<Task>,
    pub unseen: Vec<Task>,
    pub successes: Vec<Trajectory>,
    pub failures: Vec<Trajectory>,
    /// Size of the failure pool the failures were sampled from.
    pub candidates: usize,
}

impl DemoDataset {
    /// Successes first, then failures; the position is the trajectory id.
    pub fn trajectories(&self) -> impl Iterator<Item = &Trajectory> {
        self.successes.iter().chain(&self.failures)
    }

    pub fn len(&self) -> usize {
        self.successes.len() + self.failures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, id: usize) -> Option<&Trajectory> {
        self.trajectories().nth(id)
    }
}

/// All (seen task, failure spec) pairs in a fixed order.
pub fn failure_candidates(seen: &[Task]) -> Vec<(Task, FailureSpec)> {
    seen.iter()
        .flat_map(|&t| enumerate_failure_specs(t.goal).into_iter().map(move |s| (t, s)))
        .collect()
}

/// One success per seen task and 120 failures drawn without replacement.
pub fn build_dataset(env: &Env, seed: u64) -> Result<DemoDataset, MazeError> {
    let (seen, unseen) = seen_unseen_split();
    let successes = seen.iter().map(|&t| generate_success_demo(env, t)).collect::<Result<Vec<_>, _>>()?;
    let pool = failure_candidates(&seen);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = sample(&mut rng, pool.len(), SAMPLED_FAILURES.min(pool.len())).into_vec();
    picks.sort_unstable();
    let failures = picks
        .into_iter()
        .map(|i| generate_failure_demo(env, pool[i].0, pool[i].1))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DemoDataset { seed, seen, unseen, successes, failures, candidates: pool.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Item;
    use crate::map::KeySet;

    #[test]
    fn split_counts_and_membership() {
        let (seen, unseen) = seen_unseen_split();
        assert_eq!(seen.len(), 18);
        assert_eq!(unseen.len(), 18);
        let g = Goal::all();
        assert!(seen.contains(&Task { start_id: 1, goal: g[4] }));
        assert!(unseen.contains(&Task { start_id: 0, goal: g[6] }));
        assert!(seen.contains(&Task { start_id: 2, goal: g[1] }));
        for goal in g {
            assert!(seen.iter().any(|t| t.goal == goal), "{goal}");
        }
        for t in &seen {
            assert!(!unseen.contains(t));
        }
    }

    #[test]
    fn thirteen_failure_specs_per_goal() {
        for goal in Goal::all() {
            let specs = enumerate_failure_specs(goal);
            assert_eq!(specs.len(), 13);
            let mut dedup = specs.clone();
            dedup.sort();
            dedup.dedup();
            assert_eq!(dedup.len(), 13);
        }
        let (seen, _) = seen_unseen_split();
        assert_eq!(failure_candidates(&seen).len(), 234);
    }

    #[test]
    fn failure_spec_text_round_trip() {
        for spec in enumerate_failure_specs(Goal::all()[7]) {
            assert_eq!(FailureSpec::parse(&spec.describe()), Some(spec));
        }
        assert_eq!(FailureSpec::parse("nonsense"), None);
    }

    #[test]
    fn red_blue_demo_applies_keys_in_door_order() {
        let env = Env::desk();
        let task = Task { start_id: 0, goal: Goal::new(Color::Red, Color::Blue).unwrap() };
        let traj = generate_success_demo(&env, task).unwrap();
        let states = traj.replay(&env).unwrap();
        let mut applied = Vec::new();
        for (w, &a) in states.windows(2).zip(&traj.actions) {
            if a == Action::Toggle {
                if let Some(Item::Key(k)) = w[0].held {
                    applied.push(k);
                }
            }
        }
        assert_eq!(applied, vec![Color::Red, Color::Blue, Color::Red, Color::Green]);
        let last = states.last().unwrap();
        assert_eq!(last.keys_applied[Color::Red.index()], KeySet::of(&[Color::Red, Color::Blue]));
        assert_eq!(last.keys_applied[Color::Blue.index()], KeySet::of(&[Color::Red, Color::Green]));
    }

    #[test]
    fn every_success_demo_finishes_inside_the_horizon() {
        let env = Env::desk();
        for start_id in 0..3 {
            for goal in Goal::all() {
                let t = generate_success_demo(&env, Task { start_id, goal }).unwrap();
                assert!(t.success);
                assert!(t.len() <= 400);
                let states = t.replay(&env).unwrap();
                assert!(states[..states.len() - 1].iter().all(|s| !s.terminal));
            }
        }
    }

    #[test]
    fn every_failure_script_fails() {
        let env = Env::desk();
        let (seen, _) = seen_unseen_split();
        for (task, spec) in failure_candidates(&seen) {
            let t = generate_failure_demo(&env, task, spec).unwrap();
            assert!(!t.success);
            t.replay(&env).unwrap();
        }
    }

    #[test]
    fn unreachable_target_is_an_error() {
        let env = Env::desk();
        let (s, _) = env.reset(StartConfig::standard()[0], Goal::all()[0]).unwrap();
        // the diamond slot is sealed behind a locked door
        assert!(matches!(goto_face(&env, &s, env.maze.diamond_slot(Color::Red)), Err(MazeError::Unreachable(_))));
    }
}
