//! The log-linear joint model `p(f1 f2, e1 e2) ∝ exp(w . Phi) p(e1 e2)` and its
//! exact, enumeration-based quantities. These are only feasible for tiny
//! vocabularies and serve as reference values for the samplers.

use crate::corpus::{BigramTable, WordId};
use crate::error::{Error, Result};
use crate::features::{FeatureCounts, FeatureSpace, WeightVector};
use crate::ngram_lm::BigramLm;

/// Largest target vocabulary for which posteriors are enumerated.
pub const POSTERIOR_LIMIT: usize = 64;
/// Largest `|V_F|^2 |V_E|^2` for which the global normalizer is enumerated.
pub const FULL_LIMIT: u128 = 10_000_000;

#[derive(Debug, Clone)]
pub struct LogLinearModel {
    pub space: FeatureSpace,
    pub lm: BigramLm,
    pub weights: WeightVector,
}

impl LogLinearModel {
    pub fn new(space: FeatureSpace, lm: BigramLm, weights: WeightVector) -> Result<Self> {
        if lm.size() != space.target().len() {
            return Err(Error::Argument(format!(
                "LM covers {} words but the target vocabulary has {}",
                lm.size(),
                space.target().len()
            )));
        }
        Ok(LogLinearModel { space, lm, weights })
    }

    pub fn source_size(&self) -> usize {
        self.space.source().len()
    }

    pub fn target_size(&self) -> usize {
        self.space.target().len()
    }

    #[inline]
    pub fn score(&self, f: (WordId, WordId), e: (WordId, WordId)) -> f64 {
        self.weights.score(&self.space, f, e)
    }

    /// `p(e1 e2) exp(w . Phi(f1 f2, e1 e2))`
    pub fn unnorm_joint(&self, f: (WordId, WordId), e: (WordId, WordId)) -> f64 {
        let p = self.lm.prob(e.0, e.1);
        if p == 0.0 {
            return 0.0;
        }
        p * self.score(f, e).exp()
    }

    /// Log of [`LogLinearModel::unnorm_joint`]; `-inf` where the LM has no mass.
    #[inline]
    pub fn log_unnorm_joint(&self, f: (WordId, WordId), e: (WordId, WordId)) -> f64 {
        self.lm.prob(e.0, e.1).ln() + self.score(f, e)
    }
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn posterior_guard(m: &LogLinearModel) -> Result<()> {
    if m.target_size() > POSTERIOR_LIMIT {
        return Err(Error::Size(format!(
            "|V_E| = {} exceeds {POSTERIOR_LIMIT}",
            m.target_size()
        )));
    }
    Ok(())
}

fn full_guard(m: &LogLinearModel) -> Result<()> {
    let (s, t) = (m.source_size() as u128, m.target_size() as u128);
    if s * s * t * t > FULL_LIMIT {
        return Err(Error::Size(format!("|V_F|^2 |V_E|^2 = {} exceeds {FULL_LIMIT}", s * s * t * t)));
    }
    Ok(())
}

/// Unnormalized log posterior over all target bigrams (row-major) and its log normalizer.
fn log_posterior(m: &LogLinearModel, f: (WordId, WordId)) -> (Vec<f64>, f64) {
    let v = m.target_size();
    let mut logs = Vec::with_capacity(v * v);
    for e1 in 0..v {
        for e2 in 0..v {
            logs.push(m.log_unnorm_joint(f, (e1, e2)));
        }
    }
    let z = log_sum_exp(&logs);
    (logs, z)
}

/// `p(e1 e2 | f1 f2)` over `V_E^2`, row-major in `(e1, e2)`.
pub fn exact_posterior(m: &LogLinearModel, f: (WordId, WordId)) -> Result<Vec<f64>> {
    posterior_guard(m)?;
    let (logs, z) = log_posterior(m, f);
    if z == f64::NEG_INFINITY {
        return Err(Error::NumericalDegeneracy(format!("source bigram {f:?} has zero mass")));
    }
    Ok(logs.into_iter().map(|l| (l - z).exp()).collect())
}

/// Count-weighted sum over observed source bigrams of the posterior feature expectation.
pub fn exact_forced_expectation(m: &LogLinearModel, src: &BigramTable) -> Result<FeatureCounts> {
    posterior_guard(m)?;
    let v = m.target_size();
    let mut out = FeatureCounts::default();
    for (f1, f2, c) in src.iter() {
        let post = exact_posterior(m, (f1, f2))?;
        let c = c as f64;
        for e1 in 0..v {
            let p1: f64 = post[e1 * v..(e1 + 1) * v].iter().sum();
            out.add_pair(&m.space, f1, e1, c * p1);
        }
        for e2 in 0..v {
            let p2: f64 = (0..v).map(|e1| post[e1 * v + e2]).sum();
            out.add_pair(&m.space, f2, e2, c * p2);
        }
    }
    Ok(out)
}

/// Per-target-word quantities shared by the global normalizer and the full expectation.
struct GlobalTerms {
    /// `log sum_f exp(w . phi(f, e))` shifted by `shift`, exponentiated.
    scaled_mass: Vec<f64>,
    shift: f64,
    /// `sum_{e1 e2} p(e1 e2) A(e1) A(e2)` with both `A` scaled.
    scaled_z: f64,
    scores: Vec<f64>,
}

fn global_terms(m: &LogLinearModel) -> GlobalTerms {
    let (s, v) = (m.source_size(), m.target_size());
    let mut scores = vec![0.0; s * v];
    for f in 0..s {
        m.weights.fill_unit_scores(&m.space, f, &mut scores[f * v..(f + 1) * v]);
    }
    let log_mass: Vec<f64> = (0..v)
        .map(|e| log_sum_exp(&(0..s).map(|f| scores[f * v + e]).collect::<Vec<_>>()))
        .collect();
    let shift = log_mass.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scaled_mass: Vec<f64> = log_mass.iter().map(|l| (l - shift).exp()).collect();
    let mut scaled_z = 0.0;
    for e1 in 0..v {
        for e2 in 0..v {
            scaled_z += m.lm.prob(e1, e2) * scaled_mass[e1] * scaled_mass[e2];
        }
    }
    GlobalTerms {
        scaled_mass,
        shift,
        scaled_z,
        scores,
    }
}

/// `log Z_g`, the log of the global normalizer over all source and target bigrams.
pub fn exact_log_partition(m: &LogLinearModel) -> Result<f64> {
    full_guard(m)?;
    let g = global_terms(m);
    Ok(2.0 * g.shift + g.scaled_z.ln())
}

/// Feature expectation under the model joint over `(f1 f2, e1 e2)`.
///
/// The sum over source words factorizes per target word, so the enumeration
/// costs `O(|V_E|^2 + |V_F| |V_E|)`.
pub fn exact_full_expectation(m: &LogLinearModel) -> Result<FeatureCounts> {
    full_guard(m)?;
    let (s, v) = (m.source_size(), m.target_size());
    let g = global_terms(m);
    if !(g.scaled_z > 0.0) {
        return Err(Error::NumericalDegeneracy("global normalizer is zero".into()));
    }
    // first[e] = sum_e2 p(e e2) A(e2), second[e] = sum_e1 p(e1 e) A(e1), both scaled
    let mut first = vec![0.0; v];
    let mut second = vec![0.0; v];
    for e1 in 0..v {
        for e2 in 0..v {
            let p = m.lm.prob(e1, e2);
            first[e1] += p * g.scaled_mass[e2];
            second[e2] += p * g.scaled_mass[e1];
        }
    }
    let mut out = FeatureCounts::default();
    for f in 0..s {
        for e in 0..v {
            let unit = (g.scores[f * v + e] - g.shift).exp();
            let mass = unit * (first[e] + second[e]) / g.scaled_z;
            out.add_pair(&m.space, f, e, mass);
        }
    }
    Ok(out)
}

/// `E_forced - N E_full` with `N` the number of source bigram tokens.
pub fn exact_gradient(m: &LogLinearModel, src: &BigramTable) -> Result<FeatureCounts> {
    let mut grad = exact_forced_expectation(m, src)?;
    let full = exact_full_expectation(m)?;
    grad.add_scaled(&full, -(src.total_count() as f64));
    Ok(grad)
}

/// `sum_{f1 f2} c * log(Z(f1 f2) / Z_g)`, the log-likelihood of the observed source.
pub fn exact_loglik(m: &LogLinearModel, src: &BigramTable) -> Result<f64> {
    posterior_guard(m)?;
    let log_zg = exact_log_partition(m)?;
    let mut ll = 0.0;
    for (f1, f2, c) in src.iter() {
        let (_, z) = log_posterior(m, (f1, f2));
        ll += c as f64 * (z - log_zg);
    }
    Ok(ll)
}
