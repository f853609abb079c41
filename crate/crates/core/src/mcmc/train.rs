use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cd::cd_update;
use super::gibbs::{gibbs_forced, gibbs_full};
use super::imh::imh_posterior;
use super::proposal::{build_proposal, build_reverse_proposal, Proposal};
use crate::corpus::{BigramTable, WordId};
use crate::error::{Error, Result};
use crate::features::{FeatureBuilder, FeatureCounts};
use crate::loglinear::LogLinearModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Gibbs sampling for both expectations.
    Gibbs,
    /// IMH for the forced expectation, Gibbs for the full one.
    ImhGibbs,
    /// Contrastive divergence.
    Cd,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_samples: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub p_backoff: f64,
    pub qs_refresh_period: usize,
    pub rng_seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_samples: 50,
            iterations: 50,
            learning_rate: 0.05,
            p_backoff: 0.1,
            qs_refresh_period: 5,
            rng_seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::Argument("n_samples must be >= 1".into()));
        }
        if self.qs_refresh_period == 0 {
            return Err(Error::Argument("qs_refresh_period must be >= 1".into()));
        }
        if !(self.p_backoff > 0.0 && self.p_backoff < 1.0) {
            return Err(Error::Argument(format!("p_backoff must be in (0, 1), got {}", self.p_backoff)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Argument("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub seconds: f64,
    pub grad_norm: f64,
    pub accept_rate: Option<f64>,
    pub n_weights: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub iterations: Vec<IterationRecord>,
}

impl TrainRecord {
    pub fn seconds_total(&self) -> f64 {
        self.iterations.iter().map(|r| r.seconds).sum()
    }
}

/// Independent stream per (iteration, unit) so results do not depend on scheduling.
fn unit_rng(seed: u64, iteration: usize, unit: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (iteration as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(unit);
    rng
}

const FULL_CHAIN_STREAM: u64 = u64::MAX;

struct UnitResult {
    grad: FeatureCounts,
    accept: Option<f64>,
}

fn merge(units: Vec<UnitResult>) -> (FeatureCounts, Option<f64>) {
    let mut grad = FeatureBuilder::with_capacity(units.iter().map(|u| u.grad.translation.len()).sum());
    let mut rates = Vec::new();
    for u in units {
        grad.add_counts(&u.grad, 1.0);
        rates.extend(u.accept);
    }
    let rate = (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64);
    (grad.finish(), rate)
}

struct Proposals {
    forward: Proposal,
    reverse: Option<Proposal>,
}

fn estimate_gradient(
    m: &LogLinearModel,
    bigrams: &[(WordId, WordId, u64)],
    total: f64,
    method: Method,
    props: &Proposals,
    cfg: &SamplerConfig,
    iteration: usize,
) -> Result<(FeatureCounts, Option<f64>)> {
    let n = cfg.n_samples;
    let units = bigrams
        .par_iter()
        .enumerate()
        .map(|(i, &(f1, f2, c))| {
            let mut rng = unit_rng(cfg.rng_seed, iteration, i as u64);
            let c = c as f64;
            let (mut grad, accept) = match method {
                Method::Gibbs => (gibbs_forced(m, &props.forward, (f1, f2), n, &mut rng)?.mean_phi, None),
                Method::ImhGibbs => {
                    let out = imh_posterior(m, &props.forward, (f1, f2), n, &mut rng)?;
                    (out.mean_phi, out.acceptance_rate)
                }
                Method::Cd => {
                    let reverse = props.reverse.as_ref().expect("reverse proposal built for CD");
                    let est = cd_update(m, &props.forward, reverse, (f1, f2), n, 1.0, &mut rng)?;
                    (est.delta, Some(est.acceptance_rate))
                }
            };
            grad.scale(c);
            Ok(UnitResult { grad, accept })
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut grad, rate) = merge(units);
    if method != Method::Cd {
        let mut rng = unit_rng(cfg.rng_seed, iteration, FULL_CHAIN_STREAM);
        let full = gibbs_full(m, n, n, &mut rng)?;
        grad.add_scaled(&full.mean_phi, -total);
    }
    Ok((grad, rate))
}

/// Gradient ascent on the log-likelihood with sampled expectations.
///
/// Each iteration estimates the corpus gradient `E_forced - N E_full` (or its
/// contrastive-divergence surrogate) against a frozen copy of the weights and
/// then takes one step of size `learning_rate`. The proposal tables are
/// rebuilt on iterations that are multiples of `qs_refresh_period`.
pub fn train(
    model: LogLinearModel,
    src: &BigramTable,
    method: Method,
    cfg: &SamplerConfig,
) -> Result<(LogLinearModel, TrainRecord)> {
    train_with_observer(model, src, method, cfg, |_| {})
}

pub fn train_with_observer<F: FnMut(&IterationRecord)>(
    mut model: LogLinearModel,
    src: &BigramTable,
    method: Method,
    cfg: &SamplerConfig,
    mut observer: F,
) -> Result<(LogLinearModel, TrainRecord)> {
    cfg.validate()?;
    let vf = model.source_size();
    if let Some((a, b, _)) = src.iter().find(|&(a, b, _)| a >= vf || b >= vf) {
        return Err(Error::Index { index: a.max(b), size: vf });
    }
    let bigrams: Vec<(WordId, WordId, u64)> = src.iter().collect();
    let total = src.total_count() as f64;
    let mut record = TrainRecord::default();
    let mut props: Option<Proposals> = None;
    for it in 0..cfg.iterations {
        let start = Instant::now();
        if it % cfg.qs_refresh_period == 0 || props.is_none() {
            props = Some(Proposals {
                forward: build_proposal(&model.weights, &model.space, cfg.p_backoff)?,
                reverse: if method == Method::Cd {
                    Some(build_reverse_proposal(&model.weights, &model.space, cfg.p_backoff)?)
                } else {
                    None
                },
            });
        }
        let (grad, accept_rate) = estimate_gradient(
            &model,
            &bigrams,
            total,
            method,
            props.as_ref().expect("built above"),
            cfg,
            it,
        )?;
        model.weights.apply(&model.space, &grad, cfg.learning_rate);
        if !model.weights.is_finite() {
            return Err(Error::Divergence { iteration: it });
        }
        let rec = IterationRecord {
            iter: it,
            seconds: start.elapsed().as_secs_f64(),
            grad_norm: grad.l2_norm(),
            accept_rate,
            n_weights: model.weights.len(),
        };
        observer(&rec);
        record.iterations.push(rec);
    }
    Ok((model, record))
}
