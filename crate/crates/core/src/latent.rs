//! Latent encoders: the deterministic ground-truth oracle and the dispatch
//! type shared with the learned low-level model.

use std::collections::VecDeque;

use hubtopo_maze::{Color, Env, EnvState, Item, Observation, Trajectory};

use crate::lowlevel::LowLevelModel;
use crate::Result;

pub const LATENT_DIM: usize = 64;
pub const HISTORY_LEN: usize = 75;

/// Which ground-truth fields the oracle encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OracleMode {
    /// Pose, held item, keys applied per door, barrel and episode status.
    Full,
    /// As `Full` but a held red key is encoded like a held green one, so
    /// door-front states holding either key coincide.
    RedGreenBlind,
    /// Pose and episode status only: the memoryless analogue.
    PoseOnly,
}

impl OracleMode {
    pub fn name(self) -> &'static str {
        match self {
            OracleMode::Full => "full",
            OracleMode::RedGreenBlind => "red-green-blind",
            OracleMode::PoseOnly => "pose-only",
        }
    }

    pub fn parse(s: &str) -> Option<OracleMode> {
        [OracleMode::Full, OracleMode::RedGreenBlind, OracleMode::PoseOnly].into_iter().find(|m| m.name() == s)
    }
}

/// Injective feature map into a latent whose coordinates sit at bucket
/// centres `(10 v + 5.5) ε`, so distinct feature values are ≥ 10ε apart and
/// sit ε/2 away from every bucket boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleEncoder {
    pub mode: OracleMode,
    pub epsilon: f64,
    pub dim: usize,
}

impl OracleEncoder {
    pub fn new(mode: OracleMode, epsilon: f64) -> Self {
        OracleEncoder { mode, epsilon, dim: LATENT_DIM }
    }

    /// Small non-negative integer features; the step counter is excluded.
    pub fn features(&self, s: &EnvState) -> Vec<u32> {
        let status = match (s.terminal, s.success) {
            (false, _) => 0,
            (true, false) => 1,
            (true, true) => 2,
        };
        let mut f = vec![s.pos.0 as u32, s.pos.1 as u32, u32::from(s.orientation), status];
        if self.mode == OracleMode::PoseOnly {
            return f;
        }
        let held = match (self.mode, s.held) {
            (OracleMode::RedGreenBlind, Some(Item::Key(Color::Green))) => 1 + Color::Red.index() as u32,
            (_, Some(Item::Key(c))) => 1 + c.index() as u32,
            (_, Some(Item::Diamond(c))) => 5 + c.index() as u32,
            (_, None) => 0,
        };
        f.push(held);
        f.extend(s.keys_applied.iter().map(|k| u32::from(k.0)));
        f.extend(s.barrel_vec().iter().map(|&b| u32::from(b)));
        f
    }

    pub fn encode(&self, s: &EnvState) -> Vec<f64> {
        let f = self.features(s);
        (0..self.dim)
            .map(|d| (10.0 * f64::from(f.get(d).copied().unwrap_or(0)) + 5.5) * self.epsilon)
            .collect()
    }
}

/// Recent latents of the current episode plus the recurrent hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryBuffer {
    capacity: usize,
    entries: VecDeque<Vec<f64>>,
    pub hidden: Vec<f64>,
}

impl HistoryBuffer {
    pub fn new(capacity: usize, hidden_size: usize) -> Self {
        HistoryBuffer { capacity, entries: VecDeque::with_capacity(capacity), hidden: vec![0.0; hidden_size] }
    }

    pub fn push(&mut self, z: Vec<f64>) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(z);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last(&self) -> Option<&[f64]> {
        self.entries.back().map(Vec::as_slice)
    }

    pub fn clear(&mut self) {
        self.entries.clear();
        self.hidden.iter_mut().for_each(|h| *h = 0.0);
    }
}

/// Latent backend used by hub discovery and execution.
#[derive(Debug, Clone)]
pub enum Encoder {
    Oracle(OracleEncoder),
    Learned(Box<LowLevelModel>),
}

impl Encoder {
    pub fn dim(&self) -> usize {
        match self {
            Encoder::Oracle(o) => o.dim,
            Encoder::Learned(m) => m.latent_dim(),
        }
    }

    pub fn new_history(&self) -> HistoryBuffer {
        let hidden = match self {
            Encoder::Oracle(_) => 0,
            Encoder::Learned(m) => m.hidden_size(),
        };
        HistoryBuffer::new(HISTORY_LEN, hidden)
    }

    /// Encodes the newest observation. The oracle reads `state`; the
    /// learned model sees only `obs` and its history.
    pub fn encode(&self, state: &EnvState, obs: &Observation, history: &mut HistoryBuffer) -> Result<Vec<f64>> {
        let z = match self {
            Encoder::Oracle(o) => o.encode(state),
            Encoder::Learned(m) => m.encode(obs, history)?,
        };
        history.push(z.clone());
        Ok(z)
    }

    /// Latents for every observation of a recorded episode.
    pub fn encode_trajectory(&self, env: &Env, traj: &Trajectory) -> Result<Vec<Vec<f64>>> {
        let states = traj.replay(env)?;
        let mut history = self.new_history();
        states
            .iter()
            .zip(&traj.observations)
            .map(|(s, o)| self.encode(s, o, &mut history))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hubtopo_maze::{Action, Goal, KeySet, StartConfig};
    use std::collections::{HashMap, HashSet, VecDeque};

    fn start() -> (Env, EnvState) {
        let env = Env::desk();
        let (s, _) = env.reset(StartConfig::standard()[0], Goal::all()[0]).unwrap();
        (env, s)
    }

    #[test]
    fn step_count_is_ignored() {
        let (_, s) = start();
        let mut t = s.clone();
        t.step_count = 17;
        let enc = OracleEncoder::new(OracleMode::Full, 0.001);
        assert_eq!(enc.encode(&s), enc.encode(&t));
    }

    #[test]
    fn door_phases_are_far_apart() {
        let (_, s) = start();
        let mut t = s.clone();
        t.keys_applied[0] = KeySet::of(&[Color::Red]);
        let enc = OracleEncoder::new(OracleMode::Full, 0.001);
        let gap = enc.encode(&s).iter().zip(enc.encode(&t)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(gap >= 10.0 * 0.001 - 1e-12);
    }

    #[test]
    fn pose_only_ignores_held_item() {
        let (_, s) = start();
        let mut t = s.clone();
        t.held = Some(Item::Key(Color::Red));
        assert_eq!(OracleEncoder::new(OracleMode::PoseOnly, 0.001).encode(&s), OracleEncoder::new(OracleMode::PoseOnly, 0.001).encode(&t));
        assert_ne!(OracleEncoder::new(OracleMode::Full, 0.001).encode(&s), OracleEncoder::new(OracleMode::Full, 0.001).encode(&t));
    }

    #[test]
    fn red_green_blind_merges_only_those_keys() {
        let (_, s) = start();
        let enc = OracleEncoder::new(OracleMode::RedGreenBlind, 0.001);
        let with = |item| {
            let mut t = s.clone();
            t.held = item;
            enc.encode(&t)
        };
        assert_eq!(with(Some(Item::Key(Color::Red))), with(Some(Item::Key(Color::Green))));
        assert_ne!(with(Some(Item::Key(Color::Red))), with(Some(Item::Key(Color::Blue))));
        assert_ne!(with(Some(Item::Key(Color::Red))), with(None));
        assert_ne!(with(Some(Item::Diamond(Color::Red))), with(Some(Item::Diamond(Color::Blue))));
    }

    /// Every feature value lands in bucket 10v+5, so bucket equality is
    /// feature equality. Features are at most 255 (a key-set byte).
    #[test]
    fn bucket_centres_are_exact() {
        for eps in [0.001, 0.01, 0.05, 1e-4] {
            for v in 0..=255u32 {
                let z = (10.0 * f64::from(v) + 5.5) * eps;
                assert_eq!((z / eps).floor() as i64, 10 * i64::from(v) + 5, "eps {eps} v {v}");
            }
        }
    }

    /// Breadth-first over the first 150k states reachable from the three
    /// starts: no two distinct task states share a bucket.
    #[test]
    fn oracle_separates_reachable_states() {
        let env = Env::desk();
        let eps = 0.001;
        let enc = OracleEncoder::new(OracleMode::Full, eps);
        let key = |s: &EnvState| (s.pos, s.orientation, s.held, s.keys_applied, s.barrel.clone(), s.terminal, s.success);
        let mut seen: HashSet<_> = HashSet::new();
        let mut queue = VecDeque::new();
        for st in StartConfig::standard() {
            let (s, _) = env.reset(st, Goal::all()[0]).unwrap();
            if seen.insert(key(&s)) {
                queue.push_back(s);
            }
        }
        let mut by_latent: HashMap<Vec<i64>, _> = HashMap::new();
        while let Some(s) = queue.pop_front() {
            if by_latent.len() >= 150_000 {
                break;
            }
            let z = enc.encode(&s);
            let bucket: Vec<i64> = z.iter().map(|v| (v / eps).floor() as i64).collect();
            if let Some(prev) = by_latent.insert(bucket, key(&s)) {
                assert_eq!(prev, key(&s), "distinct states share a bucket");
            }
            if s.terminal {
                continue;
            }
            for a in 0..6 {
                let mut next = env.step(&s, Action::from_id(a).unwrap()).unwrap().state;
                next.step_count = 0;
                if seen.insert(key(&next)) {
                    queue.push_back(next);
                }
            }
        }
        assert_eq!(by_latent.len(), 150_000);
    }

    #[test]
    fn history_buffer_is_bounded() {
        let mut h = HistoryBuffer::new(3, 2);
        for i in 0..5 {
            h.push(vec![i as f64]);
        }
        assert_eq!(h.len(), 3);
        assert_eq!(h.last(), Some(&[4.0][..]));
        h.clear();
        assert!(h.is_empty());
    }
}
