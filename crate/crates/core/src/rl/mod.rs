//! Small-network PPO with Gaussian policies, and the residual composition
//! that keeps learned gaits close to a geometric baseline.

pub mod gae;
pub mod mlp;
pub mod policy;
pub mod ppo;
pub mod task;
pub mod train;

pub use gae::gae;
pub use mlp::{Mlp, MlpCache};
pub use policy::{compose_action, GaussianPolicy};
pub use ppo::{ppo_update, PpoConfig, RolloutBuffer};
pub use task::{BgpsConfig, Environment, PointMass, SwimmerTask};
pub use train::{evaluate_checkpoint, evaluate_policy, train, Checkpoint, EvalReport, TrainOutcome, Trainer};
