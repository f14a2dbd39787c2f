//! From-scratch PPO: MLP actor-critic, GAE, clipped-surrogate updates.

pub mod buffer;
pub mod mlp;
pub mod policy;
pub mod train;
pub mod update;

pub use buffer::{compute_gae, normalize, RolloutBuffer};
pub use mlp::{Mlp, ShapeError};
pub use policy::{PolicyParams, LOG_STD_MAX, LOG_STD_MIN};
pub use train::{reward_progress, train, write_curve_csv, Checkpoint, CurvePoint, TrainError, TrainOutcome, Trainer};
pub use update::{ppo_update, Adam, PpoConfig, UpdateStats};
