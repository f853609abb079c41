use rand::Rng;

use super::imh::{imh_reconstruction, ForwardChain};
use super::proposal::Proposal;
use crate::corpus::WordId;
use crate::error::{Error, Result};
use crate::features::{FeatureBuilder, FeatureCounts, FeatureSpace};
use crate::loglinear::LogLinearModel;

/// `lr * (Phi(data, latent) - Phi(recon, latent))`
pub fn cd_delta(
    space: &FeatureSpace,
    data: (WordId, WordId),
    recon: (WordId, WordId),
    latent: (WordId, WordId),
    learning_rate: f64,
) -> FeatureCounts {
    let mut d = FeatureCounts::default();
    d.add_bigram(space, data, latent, learning_rate);
    d.add_bigram(space, recon, latent, -learning_rate);
    // pairs that cancel exactly are not features that were "observed"
    d.translation.retain(|_, v| *v != 0.0);
    d
}

#[derive(Debug, Clone)]
pub struct CdEstimate {
    /// Mean of the `n` per-draw deltas.
    pub delta: FeatureCounts,
    /// Acceptance rate of the latent-bigram sampler.
    pub acceptance_rate: f64,
}

/// Contrastive-divergence estimate for one observed source bigram: `n` latent
/// bigrams from an IMH chain on `p(e1 e2 | data)`, each followed by a one-step
/// IMH reconstruction `recon ~ p(f1 f2 | e1 e2)` started at the data.
pub fn cd_update<R: Rng + ?Sized>(
    m: &LogLinearModel,
    forward: &Proposal,
    reverse: &Proposal,
    data: (WordId, WordId),
    n: usize,
    learning_rate: f64,
    rng: &mut R,
) -> Result<CdEstimate> {
    if n == 0 {
        return Err(Error::Argument("need at least one sample".into()));
    }
    let mut chain = ForwardChain::start(m, forward, data, rng);
    let mut delta = FeatureBuilder::with_capacity(4 * n);
    let mut accepted = 0usize;
    let scale = learning_rate / n as f64;
    for _ in 0..n {
        accepted += usize::from(chain.step(rng));
        let latent = chain.state;
        let recon = imh_reconstruction(m, reverse, latent, data, rng);
        if recon != data {
            delta.add_bigram(&m.space, data, latent, scale);
            delta.add_bigram(&m.space, recon, latent, -scale);
        }
    }
    Ok(CdEstimate {
        delta: delta.finish(),
        acceptance_rate: accepted as f64 / n as f64,
    })
}
