//! Small MLPs with hand-written backpropagation, Adam, Polyak averaging and
//! checkpoints.

mod adam;
pub mod checkpoint;
mod mlp;

pub use adam::{l2_norm, polyak_update, Adam, LinearSchedule, ProjectionSpec};
pub use mlp::{param_count, sigmoid, softplus, Mlp, OutputHead, Tape};
