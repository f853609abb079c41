use rand::Rng;

use crate::corpus::WordId;
use crate::error::{Error, Result};
use crate::features::{FeatureSpace, WeightVector};

#[derive(Debug, Clone, Default)]
struct SupportTable {
    ids: Vec<WordId>,
    probs: Vec<f64>,
    cdf: Vec<f64>,
}

impl SupportTable {
    /// Softmax over `(id, score)` pairs sorted by id.
    fn from_scores(entries: Vec<(WordId, f64)>) -> Self {
        if entries.is_empty() {
            return SupportTable::default();
        }
        let max = entries.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
        let unnorm: Vec<f64> = entries.iter().map(|e| (e.1 - max).exp()).collect();
        let z: f64 = unnorm.iter().sum();
        let probs: Vec<f64> = unnorm.iter().map(|u| u / z).collect();
        let mut acc = 0.0;
        let cdf = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        SupportTable {
            ids: entries.into_iter().map(|e| e.0).collect(),
            probs,
            cdf,
        }
    }

    fn prob(&self, x: WordId) -> f64 {
        self.ids.binary_search(&x).map_or(0.0, |i| self.probs[i])
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> WordId {
        let u = rng.gen::<f64>() * self.cdf[self.cdf.len() - 1];
        let i = self.cdf.partition_point(|&c| c <= u);
        self.ids[i.min(self.ids.len() - 1)]
    }
}

/// Independent proposal `q_u(x | c) = (1 - p_b) q_s(x | c) + p_b / V`.
///
/// `q_s(· | c)` is a softmax of unit scores over the words paired with `c` in
/// the sparse weight vector. When `c` has no such words the proposal is
/// uniform over the domain.
#[derive(Debug, Clone)]
pub struct Proposal {
    tables: Vec<SupportTable>,
    p_backoff: f64,
    domain: usize,
}

fn check_backoff(p_backoff: f64) -> Result<()> {
    if !(p_backoff > 0.0 && p_backoff < 1.0) {
        return Err(Error::Argument(format!("p_backoff must be in (0, 1), got {p_backoff}")));
    }
    Ok(())
}

/// Proposal over target words for each source word.
pub fn build_proposal(w: &WeightVector, space: &FeatureSpace, p_backoff: f64) -> Result<Proposal> {
    check_backoff(p_backoff)?;
    let tables = (0..space.source().len())
        .map(|f| SupportTable::from_scores(w.support(f).map(|(e, _)| (e, w.unit_score(space, f, e))).collect()))
        .collect();
    Ok(Proposal {
        tables,
        p_backoff,
        domain: space.target().len(),
    })
}

/// Mirrored proposal over source words for each target word, from the same sparse weights.
pub fn build_reverse_proposal(w: &WeightVector, space: &FeatureSpace, p_backoff: f64) -> Result<Proposal> {
    check_backoff(p_backoff)?;
    let mut by_target: Vec<Vec<(WordId, f64)>> = vec![Vec::new(); space.target().len()];
    for &(f, e) in w.translation.keys() {
        by_target[e].push((f, w.unit_score(space, f, e)));
    }
    Ok(Proposal {
        tables: by_target.into_iter().map(SupportTable::from_scores).collect(),
        p_backoff,
        domain: space.source().len(),
    })
}

impl Proposal {
    pub fn p_backoff(&self) -> f64 {
        self.p_backoff
    }

    pub fn domain_size(&self) -> usize {
        self.domain
    }

    pub fn support_len(&self, cond: WordId) -> usize {
        self.tables[cond].ids.len()
    }

    /// `q_s(x | cond)`
    pub fn sparse_prob(&self, cond: WordId, x: WordId) -> f64 {
        self.tables[cond].prob(x)
    }

    /// `q_u(x | cond)`
    #[inline]
    pub fn prob(&self, cond: WordId, x: WordId) -> f64 {
        let t = &self.tables[cond];
        let uniform = 1.0 / self.domain as f64;
        if t.ids.is_empty() {
            return uniform;
        }
        (1.0 - self.p_backoff) * t.prob(x) + self.p_backoff * uniform
    }

    pub fn sample<R: Rng + ?Sized>(&self, cond: WordId, rng: &mut R) -> WordId {
        let t = &self.tables[cond];
        if t.ids.is_empty() || rng.gen::<f64>() < self.p_backoff {
            rng.gen_range(0..self.domain)
        } else {
            t.sample(rng)
        }
    }
}
