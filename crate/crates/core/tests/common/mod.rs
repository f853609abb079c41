//! Random tiny instances plus a brute-force enumeration oracle that shares no
//! code with the library's factorized computations.
#![allow(dead_code)]

use std::collections::BTreeMap;

use decipher::corpus::{BigramTable, Vocab, WordId};
use decipher::features::{FeatureCounts, FeatureSpace, WeightVector};
use decipher::loglinear::LogLinearModel;
use decipher::ngram_lm::train_bigram_lm;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TARGET_WORDS: &[&str] = &["minute", "table", "stone", "garden", "window", "river", "silver", "pocket"];

pub struct Instance {
    pub model: LogLinearModel,
    pub src: BigramTable,
}

/// Source word `j` is a one-letter variant of target word `j` when `j` is even
/// (an orthographic match) and an unrelated string otherwise.
pub fn vocabs(vf: usize, ve: usize) -> (Vocab, Vocab) {
    let target = Vocab::from_words(TARGET_WORDS[..ve].iter().copied());
    let source = Vocab::from_words((0..vf).map(|j| {
        if j % 2 == 0 {
            let base = TARGET_WORDS[j % TARGET_WORDS.len()];
            format!("{}q", &base[..base.len() - 1])
        } else {
            format!("zyx{j}kw")
        }
    }));
    (source, target)
}

/// Weights on every (f, e) pair.
pub fn random_instance(seed: u64, vf: usize, ve: usize, ortho: bool) -> Instance {
    build(seed, vf, ve, ortho, true)
}

/// Weights on a random half of the pairs.
pub fn sparse_instance(seed: u64, vf: usize, ve: usize, ortho: bool) -> Instance {
    build(seed, vf, ve, ortho, false)
}

fn build(seed: u64, vf: usize, ve: usize, ortho: bool, dense: bool) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (source, target) = vocabs(vf, ve);
    let space = FeatureSpace::new(source, target, 0.3, ortho).unwrap();
    let lm_counts: Vec<_> = (0..2 * ve)
        .map(|_| (rng.gen_range(0..ve), rng.gen_range(0..ve), rng.gen_range(1..6)))
        .collect();
    let lm = train_bigram_lm(&BigramTable::from_counts(lm_counts), space.target(), 0.5).unwrap();
    let mut weights = WeightVector::default();
    if ortho {
        weights.ortho_weight = rng.gen_range(-0.5..1.5);
    }
    if dense {
        for key in (0..vf).flat_map(|f| (0..ve).map(move |e| (f, e))) {
            weights.translation.insert(key, rng.gen_range(-1.5..1.5));
        }
    } else {
        for _ in 0..(vf * ve) / 2 + 1 {
            weights
                .translation
                .insert((rng.gen_range(0..vf), rng.gen_range(0..ve)), rng.gen_range(-1.5..1.5));
        }
    }
    let src_counts: Vec<_> = (0..vf + 1)
        .map(|_| (rng.gen_range(0..vf), rng.gen_range(0..vf), rng.gen_range(1..4)))
        .collect();
    let src = BigramTable::from_counts(src_counts);
    Instance {
        model: LogLinearModel::new(space, lm, weights).unwrap(),
        src,
    }
}

/// Orthographic indicator computed straight from the strings.
pub fn ortho(m: &LogLinearModel, f: WordId, e: WordId) -> bool {
    if !m.space.ortho_enabled() {
        return false;
    }
    let a = m.space.source().word(f);
    let b = m.space.target().word(e);
    let d = strsim::levenshtein(a, b) as f64 / a.chars().count().max(b.chars().count()) as f64;
    d < 0.3
}

pub fn unit_score(m: &LogLinearModel, f: WordId, e: WordId) -> f64 {
    let t = m.weights.translation.get(&(f, e)).copied().unwrap_or(0.0);
    t + if ortho(m, f, e) { m.weights.ortho_weight } else { 0.0 }
}

pub fn unnorm(m: &LogLinearModel, f: (WordId, WordId), e: (WordId, WordId)) -> f64 {
    m.lm.prob(e.0, e.1) * (unit_score(m, f.0, e.0) + unit_score(m, f.1, e.1)).exp()
}

/// Dense expected feature counts: translation map plus ortho count.
#[derive(Debug, Clone, Default)]
pub struct Dense {
    pub translation: BTreeMap<(WordId, WordId), f64>,
    pub ortho: f64,
}

impl Dense {
    fn add(&mut self, m: &LogLinearModel, f: (WordId, WordId), e: (WordId, WordId), w: f64) {
        for (fi, ei) in [(f.0, e.0), (f.1, e.1)] {
            *self.translation.entry((fi, ei)).or_insert(0.0) += w;
            if ortho(m, fi, ei) {
                self.ortho += w;
            }
        }
    }

    /// Largest absolute difference against a library feature vector, over
    /// every pair of either and the ortho count.
    pub fn linf(&self, other: &FeatureCounts, scale: f64) -> f64 {
        let mut d = ((self.ortho - other.ortho) / scale).abs();
        for (k, v) in &self.translation {
            d = d.max(((v - other.translation.get(k).copied().unwrap_or(0.0)) / scale).abs());
        }
        for (k, v) in &other.translation {
            if !self.translation.contains_key(k) {
                d = d.max((v / scale).abs());
            }
        }
        d
    }
}

pub fn all_pairs(n: usize) -> Vec<(WordId, WordId)> {
    (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).collect()
}

/// p(e1 e2 | f1 f2), row-major over (e1, e2).
pub fn posterior(m: &LogLinearModel, f: (WordId, WordId)) -> Vec<f64> {
    let ve = m.target_size();
    let raw: Vec<f64> = all_pairs(ve).into_iter().map(|e| unnorm(m, f, e)).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / z).collect()
}

pub fn forced(m: &LogLinearModel, src: &BigramTable) -> Dense {
    let ve = m.target_size();
    let mut out = Dense::default();
    for (f1, f2, c) in src.iter() {
        let post = posterior(m, (f1, f2));
        for (i, e) in all_pairs(ve).into_iter().enumerate() {
            out.add(m, (f1, f2), e, c as f64 * post[i]);
        }
    }
    out
}

pub fn full(m: &LogLinearModel) -> Dense {
    let (vf, ve) = (m.source_size(), m.target_size());
    let mut z = 0.0;
    let mut out = Dense::default();
    for f in all_pairs(vf) {
        for e in all_pairs(ve) {
            let p = unnorm(m, f, e);
            z += p;
            out.add(m, f, e, p);
        }
    }
    for v in out.translation.values_mut() {
        *v /= z;
    }
    out.ortho /= z;
    out
}

pub fn loglik(m: &LogLinearModel, src: &BigramTable) -> f64 {
    let (vf, ve) = (m.source_size(), m.target_size());
    let z: f64 = all_pairs(vf)
        .into_iter()
        .flat_map(|f| all_pairs(ve).into_iter().map(move |e| (f, e)))
        .map(|(f, e)| unnorm(m, f, e))
        .sum();
    src.iter()
        .map(|(f1, f2, c)| {
            let zf: f64 = all_pairs(ve).into_iter().map(|e| unnorm(m, (f1, f2), e)).sum();
            c as f64 * (zf.ln() - z.ln())
        })
        .sum()
}

/// Total-variation distance between an empirical histogram and a distribution.
pub fn tv(counts: &[usize], p: &[f64]) -> f64 {
    let n: usize = counts.iter().sum();
    0.5 * counts
        .iter()
        .zip(p)
        .map(|(&c, &q)| (c as f64 / n as f64 - q).abs())
        .sum::<f64>()
}
