//! Lexicon extraction, lexicon accuracy, Viterbi decoding and corpus BLEU.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::corpus::{Vocab, WordId, UNK};
use crate::em::TranslationTable;
use crate::error::{Error, Result};
use crate::features::{FeatureSpace, WeightVector};
use crate::loglinear::LogLinearModel;
use crate::ngram_lm::BigramLm;

/// Log emission potential `log psi(f, e)` of a trained model.
pub trait EmissionModel {
    fn num_sources(&self) -> usize;
    fn num_targets(&self) -> usize;
    fn log_emission(&self, f: WordId, e: WordId) -> f64;

    /// Fills `out[e] = log psi(f, e)` for every target word.
    fn fill_log_emissions(&self, f: WordId, out: &mut [f64]) {
        for (e, o) in out.iter_mut().enumerate() {
            *o = self.log_emission(f, e);
        }
    }
}

impl EmissionModel for TranslationTable {
    fn num_sources(&self) -> usize {
        self.source_size()
    }

    fn num_targets(&self) -> usize {
        self.target_size()
    }

    fn log_emission(&self, f: WordId, e: WordId) -> f64 {
        self.get(e, f).ln()
    }
}

/// Emission potential `exp(w . phi(f, e))` of a log-linear model.
#[derive(Debug, Clone, Copy)]
pub struct WeightedEmission<'a> {
    pub space: &'a FeatureSpace,
    pub weights: &'a WeightVector,
}

impl EmissionModel for WeightedEmission<'_> {
    fn num_sources(&self) -> usize {
        self.space.source().len()
    }

    fn num_targets(&self) -> usize {
        self.space.target().len()
    }

    fn log_emission(&self, f: WordId, e: WordId) -> f64 {
        self.weights.unit_score(self.space, f, e)
    }

    fn fill_log_emissions(&self, f: WordId, out: &mut [f64]) {
        self.weights.fill_unit_scores(self.space, f, out);
    }
}

impl EmissionModel for LogLinearModel {
    fn num_sources(&self) -> usize {
        self.source_size()
    }

    fn num_targets(&self) -> usize {
        self.target_size()
    }

    fn log_emission(&self, f: WordId, e: WordId) -> f64 {
        self.weights.unit_score(&self.space, f, e)
    }

    fn fill_log_emissions(&self, f: WordId, out: &mut [f64]) {
        self.weights.fill_unit_scores(&self.space, f, out);
    }
}

/// Source word to target word, in source-vocabulary order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    pub entries: Vec<(String, String)>,
}

impl Lexicon {
    pub fn get(&self, f: &str) -> Option<&str> {
        self.entries.iter().find(|(s, _)| s == f).map(|(_, t)| t.as_str())
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        for (f, e) in &self.entries {
            writeln!(w, "{f}\t{e}")?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(r: R) -> Result<Self> {
        Ok(Lexicon {
            entries: read_pairs(r)?,
        })
    }
}

/// Reference translations, one target word per source word.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GoldLexicon {
    pub map: HashMap<String, String>,
}

impl GoldLexicon {
    pub fn read_tsv<R: BufRead>(r: R) -> Result<Self> {
        Ok(GoldLexicon {
            map: read_pairs(r)?.into_iter().collect(),
        })
    }

    /// Written sorted by source word.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut pairs: Vec<_> = self.map.iter().collect();
        pairs.sort();
        for (f, e) in pairs {
            writeln!(w, "{f}\t{e}")?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

fn read_pairs<R: BufRead>(r: R) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        match (cols.next(), cols.next(), cols.next()) {
            (Some(f), Some(e), None) if !f.is_empty() && !e.is_empty() => out.push((f.to_string(), e.to_string())),
            _ => {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: "expected `source<TAB>target`".into(),
                })
            }
        }
    }
    Ok(out)
}

/// `f -> argmax_e log psi(f, e)`, ties going to the lowest target id.
pub fn extract_lexicon<M: EmissionModel + ?Sized>(model: &M, source: &Vocab, target: &Vocab) -> Lexicon {
    let mut row = vec![0.0; model.num_targets()];
    let entries = (0..model.num_sources())
        .map(|f| {
            model.fill_log_emissions(f, &mut row);
            let mut best = 0;
            for (e, &s) in row.iter().enumerate() {
                if s > row[best] {
                    best = e;
                }
            }
            (source.word(f).to_string(), target.word(best).to_string())
        })
        .collect();
    Lexicon { entries }
}

/// Percentage of gold source words the lexicon maps correctly. The unknown-word
/// placeholder is never scored. Lexicon words missing from the gold are an error.
pub fn accuracy(lex: &Lexicon, gold: &GoldLexicon) -> Result<f64> {
    let missing: Vec<String> = lex
        .entries
        .iter()
        .filter(|(f, _)| f != UNK && !gold.map.contains_key(f))
        .map(|(f, _)| f.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Coverage(missing));
    }
    let denom = gold.map.keys().filter(|f| f.as_str() != UNK).count();
    if denom == 0 {
        return Err(Error::Argument("gold lexicon is empty".into()));
    }
    let correct = lex
        .entries
        .iter()
        .filter(|(f, e)| f != UNK && gold.map.get(f) == Some(e))
        .count();
    Ok(100.0 * correct as f64 / denom as f64)
}

/// Max-product decoder over the target bigram chain. Transitions are the LM
/// conditionals `p(e_t | e_{t-1})`, the first word uses the LM marginal.
pub struct Decoder<'a, M: EmissionModel + ?Sized> {
    model: &'a M,
    source: &'a Vocab,
    target: &'a Vocab,
    log_initial: Vec<f64>,
    log_transition: Vec<f64>,
}

impl<'a, M: EmissionModel + ?Sized> Decoder<'a, M> {
    pub fn new(model: &'a M, source: &'a Vocab, target: &'a Vocab, lm: &BigramLm) -> Result<Self> {
        let v = model.num_targets();
        if lm.size() != v || target.len() != v || source.len() != model.num_sources() {
            return Err(Error::Argument("decoder vocabularies do not match the model".into()));
        }
        let log_initial = (0..v).map(|e| lm.marginal(e).ln()).collect();
        let mut log_transition = Vec::with_capacity(v * v);
        for prev in 0..v {
            for next in 0..v {
                log_transition.push(lm.conditional(prev, next).ln());
            }
        }
        Ok(Decoder {
            model,
            source,
            target,
            log_initial,
            log_transition,
        })
    }

    fn ids(&self, sentence: &[String]) -> Result<Vec<WordId>> {
        sentence
            .iter()
            .map(|t| self.source.id(t).ok_or_else(|| Error::Oov(t.clone())))
            .collect()
    }

    /// Log score of a given target path for a source sentence.
    pub fn path_score(&self, sentence: &[String], path: &[WordId]) -> Result<f64> {
        let ids = self.ids(sentence)?;
        let v = self.model.num_targets();
        let mut s = 0.0;
        for (t, (&f, &e)) in ids.iter().zip(path).enumerate() {
            s += self.model.log_emission(f, e);
            s += if t == 0 {
                self.log_initial[e]
            } else {
                self.log_transition[path[t - 1] * v + e]
            };
        }
        Ok(s)
    }

    /// Best target id sequence.
    pub fn decode_ids(&self, sentence: &[String]) -> Result<Vec<WordId>> {
        let ids = self.ids(sentence)?;
        if ids.is_empty() {
            return Ok(Vec::new());
        }
        let v = self.model.num_targets();
        let mut emit = vec![0.0; v];
        self.model.fill_log_emissions(ids[0], &mut emit);
        let mut delta: Vec<f64> = (0..v).map(|e| self.log_initial[e] + emit[e]).collect();
        let mut back: Vec<Vec<WordId>> = Vec::with_capacity(ids.len());
        let mut next = vec![0.0; v];
        for &f in &ids[1..] {
            self.model.fill_log_emissions(f, &mut emit);
            let mut ptr = vec![0; v];
            for e in 0..v {
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0;
                for prev in 0..v {
                    let s = delta[prev] + self.log_transition[prev * v + e];
                    if s > best {
                        best = s;
                        arg = prev;
                    }
                }
                next[e] = best + emit[e];
                ptr[e] = arg;
            }
            back.push(ptr);
            std::mem::swap(&mut delta, &mut next);
        }
        let mut last = 0;
        for e in 0..v {
            if delta[e] > delta[last] {
                last = e;
            }
        }
        let mut path = vec![last];
        for ptr in back.iter().rev() {
            last = ptr[last];
            path.push(last);
        }
        path.reverse();
        Ok(path)
    }

    pub fn decode(&self, sentence: &[String]) -> Result<Vec<String>> {
        Ok(self
            .decode_ids(sentence)?
            .into_iter()
            .map(|e| self.target.word(e).to_string())
            .collect())
    }
}

/// Decode one sentence; see [`Decoder`] to decode many with shared tables.
pub fn viterbi_decode<M: EmissionModel + ?Sized>(
    sentence: &[String],
    model: &M,
    source: &Vocab,
    target: &Vocab,
    lm: &BigramLm,
) -> Result<Vec<String>> {
    Decoder::new(model, source, target, lm)?.decode(sentence)
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for g in tokens.windows(n) {
            *m.entry(g).or_insert(0) += 1;
        }
    }
    m
}

const MAX_ORDER: usize = 4;

/// Corpus-level BLEU with uniform weights up to order 4 (fewer when the
/// shortest reference is shorter), clipped counts and brevity penalty; in [0, 100].
pub fn bleu(hypotheses: &[Vec<String>], references: &[Vec<String>]) -> Result<f64> {
    if hypotheses.len() != references.len() {
        return Err(Error::Argument(format!(
            "{} hypotheses but {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    if hypotheses.is_empty() {
        return Err(Error::Argument("empty corpus".into()));
    }
    let shortest = references.iter().map(Vec::len).min().unwrap_or(0);
    let max_order = shortest.clamp(1, MAX_ORDER);
    let mut matches = vec![0usize; max_order];
    let mut totals = vec![0usize; max_order];
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);
    for (h, r) in hypotheses.iter().zip(references) {
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=max_order {
            let hc = ngram_counts(h, n);
            let rc = ngram_counts(r, n);
            totals[n - 1] += h.len().saturating_sub(n - 1);
            matches[n - 1] += hc
                .iter()
                .map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
        }
    }
    if hyp_len == 0 || matches.iter().zip(&totals).any(|(&m, &t)| m == 0 || t == 0) {
        return Ok(0.0);
    }
    let log_precision: f64 = matches
        .iter()
        .zip(&totals)
        .map(|(&m, &t)| (m as f64 / t as f64).ln())
        .sum::<f64>()
        / max_order as f64;
    let bp = if hyp_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    Ok(100.0 * bp * log_precision.exp())
}
