//! Smoothed target-side bigram language model over ordered word pairs.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::Rng;

use crate::corpus::{BigramTable, Vocab, WordId};
use crate::error::{Error, Result};

/// Joint distribution `p(e1 e2)` over ordered pairs of target words.
///
/// Every pair carries a uniform `floor` mass, observed pairs carry extra mass on
/// top of it. Add-k smoothing maps onto this as `floor = k / D` and
/// `extra = count / D` with `D = total + k * |V|^2`.
#[derive(Debug, Clone)]
pub struct BigramLm {
    vocab: Vocab,
    smoothing_k: f64,
    floor: f64,
    extra: HashMap<(WordId, WordId), f64>,
    successors: Vec<Vec<(WordId, f64)>>,
    predecessors: Vec<Vec<(WordId, f64)>>,
    marginal: Vec<f64>,
    sample_keys: Vec<(WordId, WordId)>,
    sample_cdf: Vec<f64>,
    extra_mass: f64,
}

/// Train an add-k smoothed joint bigram model.
pub fn train_bigram_lm(bigrams: &BigramTable, vocab: &Vocab, smoothing_k: f64) -> Result<BigramLm> {
    if !(smoothing_k >= 0.0) || !smoothing_k.is_finite() {
        return Err(Error::Argument(format!("smoothing_k must be >= 0, got {smoothing_k}")));
    }
    if vocab.is_empty() {
        return Err(Error::Argument("empty target vocabulary".into()));
    }
    let v = vocab.len();
    if let Some((&(a, b), _)) = bigrams.entries.iter().find(|(&(a, b), _)| a >= v || b >= v) {
        return Err(Error::Index { index: a.max(b), size: v });
    }
    let total = bigrams.total_count() as f64;
    if total == 0.0 && smoothing_k == 0.0 {
        return Err(Error::DegenerateModel("no bigrams and no smoothing".into()));
    }
    let denom = total + smoothing_k * (v * v) as f64;
    let extra = bigrams.iter().map(|(a, b, c)| ((a, b), c as f64 / denom));
    Ok(BigramLm::assemble(vocab.clone(), smoothing_k, smoothing_k / denom, extra))
}

impl BigramLm {
    fn assemble<I>(vocab: Vocab, smoothing_k: f64, floor: f64, extra: I) -> Self
    where
        I: IntoIterator<Item = ((WordId, WordId), f64)>,
    {
        let v = vocab.len();
        let mut entries: Vec<((WordId, WordId), f64)> = extra.into_iter().filter(|&(_, p)| p > 0.0).collect();
        entries.sort_by(|x, y| x.0.cmp(&y.0));
        let mut successors = vec![Vec::new(); v];
        let mut predecessors = vec![Vec::new(); v];
        let mut marginal = vec![floor * v as f64; v];
        let mut sample_keys = Vec::with_capacity(entries.len());
        let mut sample_cdf = Vec::with_capacity(entries.len());
        let mut acc = 0.0;
        for &((a, b), p) in &entries {
            successors[a].push((b, p));
            predecessors[b].push((a, p));
            marginal[a] += p;
            acc += p;
            sample_keys.push((a, b));
            sample_cdf.push(acc);
        }
        BigramLm {
            vocab,
            smoothing_k,
            floor,
            extra: entries.into_iter().collect(),
            successors,
            predecessors,
            marginal,
            sample_keys,
            sample_cdf,
            extra_mass: acc,
        }
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn size(&self) -> usize {
        self.vocab.len()
    }

    pub fn smoothing_k(&self) -> f64 {
        self.smoothing_k
    }

    /// Joint probability of the ordered pair. Ids must be in range.
    #[inline]
    pub fn prob(&self, e1: WordId, e2: WordId) -> f64 {
        debug_assert!(e1 < self.size() && e2 < self.size());
        self.floor + self.extra.get(&(e1, e2)).copied().unwrap_or(0.0)
    }

    /// Checked variant of [`BigramLm::prob`].
    pub fn lm_prob(&self, e1: WordId, e2: WordId) -> Result<f64> {
        let size = self.size();
        for id in [e1, e2] {
            if id >= size {
                return Err(Error::Index { index: id, size });
            }
        }
        Ok(self.prob(e1, e2))
    }

    /// `p(e1) = sum_e2 p(e1 e2)`.
    pub fn marginal(&self, e1: WordId) -> f64 {
        self.marginal[e1]
    }

    /// `p(e2 | e1)` derived from the joint; zero when `e1` has no mass.
    pub fn conditional(&self, prev: WordId, next: WordId) -> f64 {
        let m = self.marginal[prev];
        if m > 0.0 {
            self.prob(prev, next) / m
        } else {
            0.0
        }
    }

    /// Writes `p(e, second)` for every `e` into `out`.
    pub fn fill_column(&self, second: WordId, out: &mut [f64]) {
        out.fill(self.floor);
        for &(a, p) in &self.predecessors[second] {
            out[a] += p;
        }
    }

    /// Writes `p(first, e)` for every `e` into `out`.
    pub fn fill_row(&self, first: WordId, out: &mut [f64]) {
        out.fill(self.floor);
        for &(b, p) in &self.successors[first] {
            out[b] += p;
        }
    }

    /// Row-major dense copy of the joint.
    pub fn dense_joint(&self) -> Vec<f64> {
        let v = self.size();
        let mut out = vec![self.floor; v * v];
        for (&(a, b), &p) in &self.extra {
            out[a * v + b] += p;
        }
        out
    }

    /// Draw one ordered pair from the joint.
    pub fn sample_bigram<R: Rng + ?Sized>(&self, rng: &mut R) -> (WordId, WordId) {
        let u: f64 = rng.gen::<f64>() * (self.extra_mass + self.floor * (self.size() * self.size()) as f64);
        if u < self.extra_mass && !self.sample_cdf.is_empty() {
            let i = self.sample_cdf.partition_point(|&c| c <= u);
            return self.sample_keys[i.min(self.sample_keys.len() - 1)];
        }
        let v = self.size();
        (rng.gen_range(0..v), rng.gen_range(0..v))
    }

    /// TSV dump `e1 <TAB> e2 <TAB> prob` over every ordered pair with nonzero mass.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        let v = self.size();
        for a in 0..v {
            for b in 0..v {
                let p = self.prob(a, b);
                if p > 0.0 {
                    writeln!(w, "{}\t{}\t{}", self.vocab.word(a), self.vocab.word(b), p)?;
                }
            }
        }
        Ok(())
    }

    /// Load a dump written by [`BigramLm::write_tsv`]. Probabilities are renormalized.
    pub fn read_tsv<R: BufRead>(reader: R) -> Result<Self> {
        let mut vocab = Vocab::new();
        let mut probs = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let bad = |msg: &str| Error::Parse { line: i + 1, msg: msg.to_string() };
            if cols.len() != 3 {
                return Err(bad("expected 3 tab-separated columns"));
            }
            let p: f64 = cols[2].parse().map_err(|_| bad("bad probability"))?;
            if !(p >= 0.0) {
                return Err(bad("negative probability"));
            }
            let a = vocab.insert(cols[0].to_string());
            let b = vocab.insert(cols[1].to_string());
            probs.push(((a, b), p));
        }
        let total: f64 = probs.iter().map(|x| x.1).sum();
        if vocab.is_empty() || total <= 0.0 {
            return Err(Error::DegenerateModel("empty language model dump".into()));
        }
        let mut merged: HashMap<(WordId, WordId), f64> = HashMap::new();
        for (k, p) in probs {
            *merged.entry(k).or_insert(0.0) += p / total;
        }
        Ok(BigramLm::assemble(vocab, 0.0, 0.0, merged))
    }
}
