//! Operations on the probability simplex used by the split policies.

mod dirichlet;
mod resample;
mod sparsemax;

pub use dirichlet::{
    build_concentration, entropy, entropy_grad, log_prob, log_prob_grad, mean, sample, trigamma,
    variance, Concentration, SAMPLE_FLOOR,
};
pub use resample::{forwarding_count, resample};
pub use sparsemax::{sparsemax, sparsemax_vjp};
