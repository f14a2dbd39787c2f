//! Evaluation tasks, tracking metrics and evaluation protocols.

pub mod metrics;
pub mod protocol;
pub mod task;

pub use metrics::{compound_error, euler_errors, MetricsReport};
pub use protocol::{
    degradation_ratio, dr_generalization_protocol, evaluate_policy, evaluation_config, write_generalization_csv,
    ActionPolicy, BuoyancyCondition, EpisodeOutcome, Evaluation, GeneralizationEntry, NullPolicy,
};
pub use task::{Axis, AxisSignal, TaskKind, TaskSpec};
