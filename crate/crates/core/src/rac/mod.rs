//! Off-policy actor-critic training with a statewise multiplier.

mod config;
mod nets;
mod replay;
mod slice;
mod train;
mod updates;

pub use config::{ExplorationSpec, LrRange, TrainConfig};
pub use nets::{Batch, Networks, Normalizer, NET_NAMES};
pub use replay::ReplayBuffer;
pub use slice::{export_slice, SliceSpec, SliceSweep};
pub use train::{
    evaluate, evaluation_starts, halton, load_networks, mean_lambda, rng_for, train, write_metrics_csv, EvalReport,
    Learner, MetricsRow, ProbeSet, RunArtifacts, Stream, TrainSetup, FAILURE_MARKER, METRICS_HEADER,
};
pub use updates::{
    actor_update, critic_targets, critic_update, multiplier_update, reachability_target, safety_critic_update,
    safety_targets, Grad,
};
