//! Synthetic decipherment instances with known gold lexicons.

use std::collections::{HashMap, HashSet};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{build_vocab, Corpus, UNK};
use crate::error::{Error, Result};
use crate::eval::GoldLexicon;
use crate::features::normalized_edit_distance;

const MAX_RETRIES: usize = 100;
const CONSONANTS: &[u8] = b"bcdfghjklmnprstvz";
const VOWELS: &[u8] = b"aeiou";
const LETTERS: &[u8] = b"abcdefghijklmnopqrstuvwxyz";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CipherMode {
    /// Unrelated nonce words: spelling carries no signal.
    Opaque,
    /// One character edit away from the plaintext word.
    Cognate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CipherSpec {
    pub mode: CipherMode,
    pub rng_seed: u64,
    /// Keep only this many of the most frequent words; the rest become [`UNK`].
    pub vocab_limit: Option<usize>,
}

/// A pronounceable consonant-vowel string of the given length.
fn nonce<R: Rng + ?Sized>(rng: &mut R, len: usize) -> String {
    let start_vowel = rng.gen_bool(0.3);
    (0..len)
        .map(|i| {
            let set = if (i % 2 == 0) != start_vowel { CONSONANTS } else { VOWELS };
            *set.choose(rng).unwrap() as char
        })
        .collect()
}

fn one_edit<R: Rng + ?Sized>(rng: &mut R, word: &str) -> String {
    let mut chars: Vec<char> = word.chars().collect();
    let c = *LETTERS.choose(rng).unwrap() as char;
    if chars.is_empty() || rng.gen_bool(0.5) {
        let at = rng.gen_range(0..=chars.len());
        chars.insert(at, c);
    } else {
        let at = rng.gen_range(0..chars.len());
        if chars[at] == c {
            // a no-op substitution would map the word to itself
            chars.insert(at, c);
        } else {
            chars[at] = c;
        }
    }
    chars.into_iter().collect()
}

/// Words kept after frequency truncation, in first-occurrence order.
fn kept_words(target: &Corpus, limit: Option<usize>) -> Vec<String> {
    let vocab = build_vocab(target);
    let words: Vec<String> = vocab.words().iter().filter(|w| w.as_str() != UNK).cloned().collect();
    let Some(limit) = limit else { return words };
    if words.len() <= limit {
        return words;
    }
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for t in target.sentences.iter().flatten() {
        *freq.entry(t.as_str()).or_insert(0) += 1;
    }
    let mut ranked: Vec<(usize, &String)> = words.iter().enumerate().collect();
    ranked.sort_by_key(|&(i, w)| (std::cmp::Reverse(freq[w.as_str()]), i));
    let keep: HashSet<&str> = ranked[..limit].iter().map(|(_, w)| w.as_str()).collect();
    words.iter().filter(|w| keep.contains(w.as_str())).cloned().collect()
}

/// Encipher `target` word by word. Returns the enciphered corpus and the
/// gold lexicon mapping each cipher word back to its plaintext word.
pub fn make_cipher(target: &Corpus, spec: &CipherSpec) -> Result<(Corpus, GoldLexicon)> {
    if target.num_tokens() == 0 {
        return Err(Error::Argument("target corpus is empty".into()));
    }
    if matches!(spec.vocab_limit, Some(l) if l < 2) {
        return Err(Error::Argument("vocab_limit must be at least 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let words = kept_words(target, spec.vocab_limit);
    let mut used: HashSet<String> = HashSet::from([UNK.to_string()]);
    let mut forward: HashMap<String, String> = HashMap::new();
    for w in &words {
        let mut found = None;
        for _ in 0..MAX_RETRIES {
            let candidate = match spec.mode {
                CipherMode::Cognate => one_edit(&mut rng, w),
                CipherMode::Opaque => {
                    let n = w.chars().count().max(4) + rng.gen_range(0..2);
                    let c = nonce(&mut rng, n);
                    if normalized_edit_distance(&c, w)? <= DEFAULT_OPAQUE_MIN_DISTANCE {
                        continue;
                    }
                    c
                }
            };
            if !used.contains(&candidate) {
                found = Some(candidate);
                break;
            }
        }
        let cipher = found.ok_or_else(|| Error::Generation(format!("no free cipher word for {w:?}")))?;
        used.insert(cipher.clone());
        forward.insert(w.clone(), cipher);
    }
    let sentences = target
        .sentences
        .iter()
        .map(|s| {
            s.iter()
                .map(|t| forward.get(t).cloned().unwrap_or_else(|| UNK.to_string()))
                .collect()
        })
        .collect();
    let gold = GoldLexicon {
        map: forward.into_iter().map(|(e, f)| (f, e)).collect(),
    };
    Ok((Corpus::new(format!("{}-cipher", target.lang_tag), sentences), gold))
}

const DEFAULT_OPAQUE_MIN_DISTANCE: f64 = 0.3;

/// Contiguous prefix/suffix split; the prefix holds `round(ratio * n)` sentences,
/// clamped so that neither part is empty.
pub fn split_disjoint(corpus: &Corpus, ratio: f64) -> Result<(Corpus, Corpus)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Argument(format!("split ratio {ratio} outside (0, 1)")));
    }
    let n = corpus.len();
    if n < 2 {
        return Err(Error::Argument(format!("cannot split a corpus of {n} sentences")));
    }
    let cut = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
    let a = Corpus::new(corpus.lang_tag.clone(), corpus.sentences[..cut].to_vec());
    let b = Corpus::new(corpus.lang_tag.clone(), corpus.sentences[cut..].to_vec());
    Ok((a, b))
}

/// Parameters for a Zipfian Markov-chain plaintext.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaintextSpec {
    pub sentences: usize,
    pub vocab_size: usize,
    /// Distinct successors per word.
    pub branching: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Chance of jumping to a fresh unigram draw instead of following the chain.
    pub jump: f64,
    pub rng_seed: u64,
}

impl Default for PlaintextSpec {
    fn default() -> Self {
        PlaintextSpec {
            sentences: 500,
            vocab_size: 150,
            branching: 4,
            min_len: 6,
            max_len: 14,
            jump: 0.1,
            rng_seed: 0,
        }
    }
}

fn zipf(n: usize) -> WeightedIndex<f64> {
    WeightedIndex::new((1..=n).map(|r| 1.0 / r as f64)).expect("non-empty weights")
}

/// Generates a plaintext corpus over `vocab_size` distinct pronounceable
/// words of length 4 to 8, following a sparse random bigram chain.
pub fn synth_plaintext(spec: &PlaintextSpec) -> Result<Corpus> {
    if spec.vocab_size < 2 || spec.branching == 0 || spec.min_len == 0 || spec.min_len > spec.max_len {
        return Err(Error::Argument("invalid plaintext settings".into()));
    }
    if !(0.0..=1.0).contains(&spec.jump) {
        return Err(Error::Argument("jump must lie in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let mut seen = HashSet::new();
    let mut words = Vec::with_capacity(spec.vocab_size);
    let mut attempts = 0;
    while words.len() < spec.vocab_size {
        attempts += 1;
        if attempts > spec.vocab_size * MAX_RETRIES {
            return Err(Error::Generation("could not draw enough distinct words".into()));
        }
        let len = rng.gen_range(4..=8);
        let w = nonce(&mut rng, len);
        if seen.insert(w.clone()) {
            words.push(w);
        }
    }
    let unigram = zipf(spec.vocab_size);
    let branching = spec.branching.min(spec.vocab_size);
    let successors: Vec<Vec<usize>> = (0..spec.vocab_size)
        .map(|_| {
            let mut s: Vec<usize> = Vec::with_capacity(branching);
            while s.len() < branching {
                let next = unigram.sample(&mut rng);
                if !s.contains(&next) {
                    s.push(next);
                }
            }
            s
        })
        .collect();
    let step = zipf(branching);
    let sentences = (0..spec.sentences)
        .map(|_| {
            let len = rng.gen_range(spec.min_len..=spec.max_len);
            let mut cur = unigram.sample(&mut rng);
            let mut s = vec![words[cur].clone()];
            while s.len() < len {
                cur = if rng.gen_bool(spec.jump) {
                    unigram.sample(&mut rng)
                } else {
                    successors[cur][step.sample(&mut rng)]
                };
                s.push(words[cur].clone());
            }
            s
        })
        .collect();
    Ok(Corpus::new("plain", sentences))
}
