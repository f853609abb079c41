use rand::Rng;

use super::proposal::Proposal;
use super::ChainOutput;
use crate::corpus::WordId;
use crate::error::{Error, Result};
use crate::features::FeatureBuilder;
use crate::loglinear::LogLinearModel;

/// Metropolis-Hastings acceptance test in log space. A current state with zero
/// target mass accepts anything.
#[inline]
fn accept<R: Rng + ?Sized>(log_ratio: f64, current_log_target: f64, rng: &mut R) -> bool {
    if current_log_target == f64::NEG_INFINITY {
        return true;
    }
    log_ratio >= 0.0 || rng.gen::<f64>().ln() < log_ratio
}

/// Independence sampler over the latent target bigram of a fixed source bigram.
pub(crate) struct ForwardChain<'a> {
    m: &'a LogLinearModel,
    prop: &'a Proposal,
    source: (WordId, WordId),
    pub state: (WordId, WordId),
    log_target: f64,
    log_q: f64,
}

impl<'a> ForwardChain<'a> {
    pub fn start<R: Rng + ?Sized>(
        m: &'a LogLinearModel,
        prop: &'a Proposal,
        source: (WordId, WordId),
        rng: &mut R,
    ) -> Self {
        let state = (prop.sample(source.0, rng), prop.sample(source.1, rng));
        ForwardChain {
            m,
            prop,
            source,
            state,
            log_target: m.log_unnorm_joint(source, state),
            log_q: Self::log_q(prop, source, state),
        }
    }

    #[inline]
    fn log_q(prop: &Proposal, f: (WordId, WordId), e: (WordId, WordId)) -> f64 {
        prop.prob(f.0, e.0).ln() + prop.prob(f.1, e.1).ln()
    }

    /// One propose/accept step; returns whether the proposal was accepted.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        let cand = (self.prop.sample(self.source.0, rng), self.prop.sample(self.source.1, rng));
        let cand_target = self.m.log_unnorm_joint(self.source, cand);
        let cand_q = Self::log_q(self.prop, self.source, cand);
        let log_ratio = (cand_target - self.log_target) + (self.log_q - cand_q);
        if accept(log_ratio, self.log_target, rng) {
            self.state = cand;
            self.log_target = cand_target;
            self.log_q = cand_q;
            true
        } else {
            false
        }
    }
}

/// Independent Metropolis-Hastings over `p(e1 e2 | f1 f2)` with proposal
/// `q_u(e1|f1) q_u(e2|f2)`. The chain starts from a proposal draw; a rejected
/// proposal repeats the current state in the sample stream.
pub fn imh_posterior<R: Rng + ?Sized>(
    m: &LogLinearModel,
    prop: &Proposal,
    f: (WordId, WordId),
    n: usize,
    rng: &mut R,
) -> Result<ChainOutput<(WordId, WordId)>> {
    if n == 0 {
        return Err(Error::Argument("need at least one sample".into()));
    }
    let mut chain = ForwardChain::start(m, prop, f, rng);
    let mut samples = Vec::with_capacity(n);
    let mut phi = FeatureBuilder::with_capacity(2 * n);
    let mut accepted = 0usize;
    let unit = 1.0 / n as f64;
    for _ in 0..n {
        accepted += usize::from(chain.step(rng));
        samples.push(chain.state);
        phi.add_bigram(&m.space, f, chain.state, unit);
    }
    Ok(ChainOutput {
        samples,
        mean_phi: phi.finish(),
        acceptance_rate: Some(accepted as f64 / n as f64),
    })
}

/// One independence step from `current` towards `p(f1 f2 | e1 e2) ∝ exp(w . Phi)`
/// using the mirrored proposal `q_u(f1|e1) q_u(f2|e2)`.
pub fn imh_reconstruction<R: Rng + ?Sized>(
    m: &LogLinearModel,
    reverse: &Proposal,
    latent: (WordId, WordId),
    current: (WordId, WordId),
    rng: &mut R,
) -> (WordId, WordId) {
    let cand = (reverse.sample(latent.0, rng), reverse.sample(latent.1, rng));
    let log_q = |f: (WordId, WordId)| reverse.prob(latent.0, f.0).ln() + reverse.prob(latent.1, f.1).ln();
    let log_ratio = (m.score(cand, latent) - m.score(current, latent)) + (log_q(current) - log_q(cand));
    if accept(log_ratio, 0.0, rng) {
        cand
    } else {
        current
    }
}
