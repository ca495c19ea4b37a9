//! Hub-topology imitation pipeline: latent encoders, hub discovery, the hub
//! dynamics model, per-hub policies, bottleneck search and execution.

pub mod config;
pub mod exec;
pub mod high;
pub mod latent;
pub mod lowlevel;
pub mod pipeline;
pub mod policy;
pub mod search;
pub mod topology;

pub use config::RunConfig;
pub use exec::{execute, ExecConfig, ExecutionResult, FailureReason};
pub use high::{HighConfig, HighModel, HubModel};
pub use latent::{Encoder, HistoryBuffer, OracleEncoder, OracleMode};
pub use lowlevel::{LowLevelConfig, LowLevelModel};
pub use policy::{PolicyBank, PolicyConfig};
pub use search::{bfs_plan, search, Plan, SearchConfig};
pub use topology::{bucket_of, BehaviorTopology, ClusterId, Hub, HubKinds, LatentTrajectory, Segment};

#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("malformed artifact: {0}")]
    Format(String),
    #[error("config: {0}")]
    Config(String),
    #[error("stage {stage}: {message}")]
    Stage { stage: String, message: String },
    #[error(transparent)]
    Nn(#[from] hubtopo_nn::NnError),
    #[error(transparent)]
    Maze(#[from] hubtopo_maze::MazeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
