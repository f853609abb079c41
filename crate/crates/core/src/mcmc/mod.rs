//! Approximate training of the log-linear model: Gibbs sampling, independent
//! Metropolis-Hastings, contrastive divergence, and the gradient loop tying
//! them together.

mod cd;
mod gibbs;
mod imh;
mod proposal;
mod train;

use crate::features::FeatureCounts;

pub use cd::{cd_delta, cd_update, CdEstimate};
pub use gibbs::{gibbs_forced, gibbs_full, JointSample};
pub use imh::{imh_posterior, imh_reconstruction};
pub use proposal::{build_proposal, build_reverse_proposal, Proposal};
pub use train::{train, train_with_observer, IterationRecord, Method, SamplerConfig, TrainRecord};

/// Samples drawn by one chain and the mean bigram feature vector over them.
#[derive(Debug, Clone)]
pub struct ChainOutput<S> {
    pub samples: Vec<S>,
    pub mean_phi: FeatureCounts,
    pub acceptance_rate: Option<f64>,
}
