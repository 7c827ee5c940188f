//! Deterministic vehicular-edge-computing simulator and cooperative
//! multi-agent reinforcement-learning harness.
//!
//! The crate is organized around the pipeline a task-offloading experiment
//! follows:
//!
//! - [`scenario`]: configuration schema, validation, and seeded world
//!   construction (truncated-Gaussian speed sampling included).
//! - [`mobility`]: per-episode kinematics, platoon speed sync, and
//!   communication hold times.
//! - [`radio`]: channel gains, cumulative interference, and achievable
//!   V2I/V2V rates.
//! - [`offload`]: task generation, the delay models for each offloading
//!   target, feasibility filtering, and the system objective.
//! - [`env`]: the cooperative multi-agent environment (local observations,
//!   masked action spaces, penalty-shaped shared rewards).
//! - [`nn`]: a minimal reverse-mode-differentiable dense + GRU + dense
//!   Q-network with an adaptive-moment optimizer.
//! - [`madrl`]: replay, epsilon-greedy selection, value-decomposition and
//!   independent-Q losses, the training loop, and heuristic policies.
//! - [`experiments`]: evaluation, parameter sweeps, and CSV reporting.
//! - [`selfcheck`]: independently coded oracle suites exposed to the CLI.

pub mod env;
pub mod experiments;
pub mod madrl;
pub mod mobility;
pub mod nn;
pub mod offload;
pub mod radio;
pub mod rng;
pub mod scenario;
pub mod selfcheck;

pub use env::{ActionMask, Observation, StepInfo, VecEnv};
pub use experiments::{MetricsRow, Scheme, SweepSpec, SweepVariable};
pub use madrl::{HeuristicKind, Policy, ReplayBuffer, TrainConfig, TrainMode};
pub use nn::{NetDims, QNetwork};
pub use offload::{OffloadDecision, Task};
pub use rng::Stream;
pub use scenario::{
    ChannelParams, ComputeParams, ExperimentConfig, MobilityParams, ScenarioConfig, TaskParams,
    WorldState,
};
