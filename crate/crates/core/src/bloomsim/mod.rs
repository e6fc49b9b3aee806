//! Lake-bloom sampling with an ASV carrying a docking AUV.
//!
//! The true bloom is a sum of Gaussian blobs carried by a known flow; the
//! subsurface channel is the surface field read at a fixed offset. The team's
//! belief is a GP over the time-0 frame whose kernel may be switched between
//! a smooth member (`k_A`) and a front-tracking one (`k_B`).

pub mod agent;
pub mod belief;
pub mod episode;
pub mod planner;
pub mod world;

pub use agent::{feasible_actions, transition, Action, AgentState, MissionBudget, Sigma};
pub use belief::{Belief, Channel, Observation, Site};
pub use episode::{run_episode, BloomConfig, EpisodeResult, Policy, StepLog};
pub use planner::{kernel_switch_decide, plan_step, NoiseModel, PlannerWeights, SwitchDecision, SwitchSpec};
pub use world::{step_environment, Blob, BloomWorld, Flow, WorldParams};
