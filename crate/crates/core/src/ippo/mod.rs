//! Independent PPO with shared actor and critic parameters and Dirichlet
//! split policies.

mod buffer;
mod checkpoint;
mod gae;
mod loss;
mod policy;
mod trainer;

pub use buffer::{RolloutBuffer, Transition};
pub use checkpoint::{load_policy, read_header, CheckpointHeader, MAGIC, VERSION};
pub use gae::{compute_gae, normalize};
pub use loss::{clipped_objective, clipped_objective_dlogp, clipped_value, value_loss};
pub use policy::{
    act, actor_encoder, critic_encoder, encoder_dims, observation_batch, partition_agents, step_agents,
    AgentStep, IppoPolicy, ACTOR_HEAD_GAIN,
};
pub use trainer::{
    actor_loss, advantages, critic_loss, write_curve_csv, Batch, CurveRow, LossOutput, Trainer, CURVE_HEADER,
};

#[cfg(test)]
mod tests;
