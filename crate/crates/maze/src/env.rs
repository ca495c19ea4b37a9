//! Grid-snapped simulator.

use std::fmt;

use crate::map::{door_requirements, Color, KeySet, Maze, Pos, Tile};
use crate::raster::{rasterize, Observation};
use crate::MazeError;

pub const HORIZON: u32 = 400;
pub const NUM_ACTIONS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Forward,
    Backward,
    TurnLeft,
    TurnRight,
    Pickup,
    Toggle,
}

impl Action {
    pub const ALL: [Action; NUM_ACTIONS] = [
        Action::Forward,
        Action::Backward,
        Action::TurnLeft,
        Action::TurnRight,
        Action::Pickup,
        Action::Toggle,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Action> {
        Action::ALL.get(id).copied()
    }
}

/// Ordered pair of distinct diamond colors to deposit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Goal {
    pub first: Color,
    pub second: Color,
}

impl Goal {
    pub fn new(first: Color, second: Color) -> Result<Goal, MazeError> {
        if first == second {
            return Err(MazeError::InvalidGoal(format!("{first} twice")));
        }
        Ok(Goal { first, second })
    }

    /// The 12 legal goals, color-major in (red, blue, green, purple) order.
    pub fn all() -> Vec<Goal> {
        Color::ALL
            .iter()
            .flat_map(|&a| Color::ALL.iter().filter(move |&&b| b != a).map(move |&b| Goal { first: a, second: b }))
            .collect()
    }

    /// Position of this goal in [`Goal::all`].
    pub fn index(self) -> usize {
        Goal::all().iter().position(|g| *g == self).expect("goal is legal")
    }

    pub fn colors(self) -> [Color; 2] {
        [self.first, self.second]
    }
}

impl fmt::Display for Goal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.first, self.second)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StartConfig {
    pub pos: Pos,
    /// Quarter turns counter-clockwise from east: 0 east, 1 north, 2 west, 3 south.
    pub orientation: u8,
}

impl StartConfig {
    /// The three evaluation starts: ((3,3),0), ((3,6),0), ((6,3),0).
    pub fn standard() -> [StartConfig; 3] {
        [
            StartConfig { pos: (3, 3), orientation: 0 },
            StartConfig { pos: (3, 6), orientation: 0 },
            StartConfig { pos: (6, 3), orientation: 0 },
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Item {
    Key(Color),
    Diamond(Color),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DoorPhase {
    Locked,
    HalfOpen,
    Open,
}

/// Complete ground-truth state. A plain value: stepping returns a new one.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EnvState {
    pub pos: Pos,
    pub orientation: u8,
    pub held: Option<Item>,
    /// Keys applied to each door, indexed by the door's diamond color.
    pub keys_applied: [KeySet; 4],
    pub key_present: [bool; 4],
    pub diamond_present: [bool; 4],
    pub barrel: Vec<Color>,
    pub goal: Goal,
    pub step_count: u32,
    pub terminal: bool,
    pub success: bool,
}

impl EnvState {
    pub fn door_phase(&self, door: Color) -> DoorPhase {
        match self.keys_applied[door.index()].len() {
            0 => DoorPhase::Locked,
            1 => DoorPhase::HalfOpen,
            _ => DoorPhase::Open,
        }
    }

    /// Barrel contents padded with zeros, as color ids.
    pub fn barrel_vec(&self) -> [u8; 2] {
        let mut v = [0; 2];
        for (slot, c) in v.iter_mut().zip(&self.barrel) {
            *slot = c.id();
        }
        v
    }
}

pub fn direction(orientation: u8) -> Pos {
    match orientation % 4 {
        0 => (1, 0),
        1 => (0, -1),
        2 => (-1, 0),
        _ => (0, 1),
    }
}

pub fn offset(p: Pos, d: Pos) -> Pos {
    (p.0 + d.0, p.1 + d.1)
}

/// Reward shaping. Wrong-key attempts pay only the step cost by default.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardConfig {
    pub step_cost: f64,
    pub success: f64,
    pub wrong_deposit: f64,
    pub wrong_key: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig { step_cost: -0.1, success: 100.0, wrong_deposit: -10.0, wrong_key: -0.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: EnvState,
    pub observation: Observation,
    pub reward: f64,
    pub terminal: bool,
    pub success: bool,
}

/// A maze plus reward settings and horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Env {
    pub maze: Maze,
    pub rewards: RewardConfig,
    pub horizon: u32,
}

impl Env {
    pub fn new(maze: Maze) -> Env {
        Env { maze, rewards: RewardConfig::default(), horizon: HORIZON }
    }

    pub fn desk() -> Env {
        Env::new(Maze::desk())
    }

    pub fn reset(&self, start: StartConfig, goal: Goal) -> Result<(EnvState, Observation), MazeError> {
        if goal.first == goal.second {
            return Err(MazeError::InvalidGoal(goal.to_string()));
        }
        if self.maze.tile(start.pos) != Tile::Floor {
            return Err(MazeError::StartBlocked(start.pos));
        }
        let state = EnvState {
            pos: start.pos,
            orientation: start.orientation % 4,
            held: None,
            keys_applied: [KeySet::default(); 4],
            key_present: [true; 4],
            diamond_present: [true; 4],
            barrel: Vec::new(),
            goal,
            step_count: 0,
            terminal: false,
            success: false,
        };
        let obs = rasterize(&self.maze, &state);
        Ok((state, obs))
    }

    /// Whether the agent may stand on `p` in `state`.
    pub fn walkable(&self, state: &EnvState, p: Pos) -> bool {
        match self.maze.tile(p) {
            Tile::Floor => true,
            Tile::Door(c) => state.door_phase(c) == DoorPhase::Open,
            _ => false,
        }
    }

    pub fn step(&self, state: &EnvState, action: Action) -> Result<Transition, MazeError> {
        if state.terminal {
            return Err(MazeError::TerminalState);
        }
        let mut s = state.clone();
        s.step_count += 1;
        let mut reward = self.rewards.step_cost;
        let facing = offset(s.pos, direction(s.orientation));
        match action {
            Action::Forward | Action::Backward => {
                let d = direction(s.orientation);
                let target = if action == Action::Forward { facing } else { (s.pos.0 - d.0, s.pos.1 - d.1) };
                if self.walkable(&s, target) {
                    s.pos = target;
                }
            }
            Action::TurnLeft => s.orientation = (s.orientation + 1) % 4,
            Action::TurnRight => s.orientation = (s.orientation + 3) % 4,
            Action::Pickup => {
                if s.held.is_none() {
                    match self.maze.tile(facing) {
                        Tile::KeySlot(c) if s.key_present[c.index()] => {
                            s.key_present[c.index()] = false;
                            s.held = Some(Item::Key(c));
                        }
                        Tile::DiamondSlot(c) if s.diamond_present[c.index()] => {
                            s.diamond_present[c.index()] = false;
                            s.held = Some(Item::Diamond(c));
                        }
                        _ => {}
                    }
                }
            }
            Action::Toggle => match (s.held, self.maze.tile(facing)) {
                (Some(Item::Key(k)), Tile::Door(door)) if s.door_phase(door) != DoorPhase::Open => {
                    let (a, b) = door_requirements(door);
                    if k != a && k != b {
                        s.terminal = true;
                        reward = self.rewards.wrong_key;
                    } else if !s.keys_applied[door.index()].contains(k) {
                        s.keys_applied[door.index()].insert(k);
                        s.held = None;
                        // consumed keys reappear in their slot
                        s.key_present[k.index()] = true;
                    }
                }
                (Some(Item::Diamond(d)), Tile::Barrel) if s.barrel.len() < 2 => {
                    s.held = None;
                    s.barrel.push(d);
                    let goal = s.goal.colors();
                    let slot = s.barrel.len() - 1;
                    if s.barrel[slot] != goal[slot] {
                        s.terminal = true;
                        reward = self.rewards.wrong_deposit;
                    } else if s.barrel.len() == 2 {
                        s.terminal = true;
                        s.success = true;
                        reward = self.rewards.success;
                    }
                }
                _ => {}
            },
        }
        if !s.terminal && s.step_count >= self.horizon {
            s.terminal = true;
        }
        let observation = rasterize(&self.maze, &s);
        Ok(Transition { terminal: s.terminal, success: s.success, state: s, observation, reward })
    }
}
