//! Discrete-time multi-hop UAV network simulator with split-and-forward
//! routing, Dirichlet-policy IPPO training and baseline policies.

// Validation uses `!(x >= 0.0)` on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod channel;
pub mod config;
pub mod env;
pub mod error;
pub mod experiments;
pub mod forwarding;
pub mod ippo;
pub mod mobility;
pub mod nn;
pub mod queueing;
pub mod rng;
pub mod sim;
pub mod simplex;
pub mod types;

pub use config::{SimConfig, TrainConfig};
pub use error::{Error, Result};
