//! Deterministic key/door/diamond maze, its egocentric raster observation,
//! and the scripted expert that produces demonstration datasets.

pub mod demo;
pub mod env;
pub mod map;
pub mod raster;
pub mod store;

pub use demo::{
    build_dataset, enumerate_failure_specs, generate_failure_demo, generate_success_demo, seen_unseen_split,
    DemoDataset, FailureSpec, Task, Trajectory,
};
pub use env::{Action, DoorPhase, Env, EnvState, Goal, Item, RewardConfig, StartConfig, Transition, HORIZON, NUM_ACTIONS};
pub use map::{door_requirements, Color, KeySet, Maze, Pos, Tile};
pub use raster::{rasterize, Observation, FEATURE_LEN, VIEW_LEN};

#[derive(Debug, thiserror::Error)]
pub enum MazeError {
    #[error("map: {0}")]
    Map(String),
    #[error("start cell {0:?} is not free")]
    StartBlocked(Pos),
    #[error("invalid goal: {0}")]
    InvalidGoal(String),
    #[error("action on a terminal state")]
    TerminalState,
    #[error("no free cell faces {0:?}")]
    Unreachable(Pos),
    #[error("script: {0}")]
    Script(String),
    #[error("replay mismatch: {0}")]
    Replay(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Nn(#[from] hubtopo_nn::NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
