//! Monolingual corpora, vocabularies and bigram count tables.

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;

use crate::error::{Error, Result};

/// Word identifier inside a [`Vocab`].
pub type WordId = usize;

/// Tokenization options for [`load_corpus`].
#[derive(Debug, Clone, Copy)]
pub struct TokenizeOptions {
    /// Drop tokens made only of punctuation and trim punctuation off token edges.
    pub strip_punct: bool,
}

impl Default for TokenizeOptions {
    fn default() -> Self {
        TokenizeOptions { strip_punct: true }
    }
}

/// A tokenized monolingual corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub sentences: Vec<Vec<String>>,
    pub lang_tag: String,
}

impl Corpus {
    pub fn new(lang_tag: impl Into<String>, sentences: Vec<Vec<String>>) -> Self {
        Corpus {
            sentences,
            lang_tag: lang_tag.into(),
        }
    }

    /// Build a corpus from string slices, mostly useful in tests.
    pub fn from_tokens(lang_tag: &str, sentences: &[&[&str]]) -> Self {
        let sentences = sentences
            .iter()
            .map(|s| s.iter().map(|t| t.to_string()).collect())
            .collect();
        Corpus::new(lang_tag, sentences)
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn num_tokens(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    /// One sentence per line, tokens separated by a single space.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.sentences {
            out.push_str(&s.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Placeholder for out-of-budget words in truncated vocabularies.
pub const UNK: &str = "<unk>";

fn normalize_token(raw: &str, opts: TokenizeOptions) -> Option<String> {
    if raw == UNK {
        return Some(raw.to_string());
    }
    let tok = if opts.strip_punct {
        raw.trim_matches(|c: char| !c.is_alphanumeric())
    } else {
        raw
    };
    if tok.is_empty() {
        return None;
    }
    Some(tok.to_lowercase())
}

/// Tokenize a single line.
pub fn tokenize_line(line: &str, opts: TokenizeOptions) -> Vec<String> {
    line.split_whitespace()
        .filter_map(|t| normalize_token(t, opts))
        .collect()
}

/// Read one sentence per line. Empty lines (after tokenization) are skipped.
pub fn load_corpus<R: BufRead>(mut reader: R, lang_tag: &str, opts: TokenizeOptions) -> Result<Corpus> {
    let mut sentences = Vec::new();
    let mut buf = Vec::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        line_no += 1;
        let line = std::str::from_utf8(&buf).map_err(|_| Error::Decode { line: line_no })?;
        let toks = tokenize_line(line, opts);
        if !toks.is_empty() {
            sentences.push(toks);
        }
    }
    Ok(Corpus::new(lang_tag, sentences))
}

/// Insertion-ordered set of distinct tokens with dense ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, WordId>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocab::new();
        for w in words {
            v.insert(w.into());
        }
        v
    }

    /// Insert a word if new, returning its id.
    pub fn insert(&mut self, word: String) -> WordId {
        if let Some(&id) = self.index.get(&word) {
            return id;
        }
        let id = self.words.len();
        self.index.insert(word.clone(), id);
        self.words.push(word);
        id
    }

    pub fn id(&self, word: &str) -> Option<WordId> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: WordId) -> &str {
        &self.words[id]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

pub fn build_vocab(corpus: &Corpus) -> Vocab {
    let mut v = Vocab::new();
    for tok in corpus.sentences.iter().flatten() {
        if v.id(tok).is_none() {
            v.insert(tok.clone());
        }
    }
    v
}

/// Counts of unique adjacent word pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BigramTable {
    pub entries: BTreeMap<(WordId, WordId), u64>,
    pub total_tokens: u64,
}

impl BigramTable {
    /// Build directly from `(w1, w2, count)` triples; zero counts are skipped.
    pub fn from_counts<I: IntoIterator<Item = (WordId, WordId, u64)>>(counts: I) -> Self {
        let mut t = BigramTable::default();
        for (a, b, c) in counts {
            if c > 0 {
                *t.entries.entry((a, b)).or_insert(0) += c;
            }
        }
        t
    }

    /// Number of unique bigrams.
    pub fn num_unique(&self) -> usize {
        self.entries.len()
    }

    /// Sum of all bigram counts.
    pub fn total_count(&self) -> u64 {
        self.entries.values().sum()
    }

    pub fn get(&self, a: WordId, b: WordId) -> u64 {
        self.entries.get(&(a, b)).copied().unwrap_or(0)
    }

    /// `(w1, w2, count)` in key order.
    pub fn iter(&self) -> impl Iterator<Item = (WordId, WordId, u64)> + '_ {
        self.entries.iter().map(|(&(a, b), &c)| (a, b, c))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn extract_bigrams(corpus: &Corpus, vocab: &Vocab) -> Result<BigramTable> {
    let mut table = BigramTable::default();
    for sent in &corpus.sentences {
        let ids = sent
            .iter()
            .map(|t| vocab.id(t).ok_or_else(|| Error::Consistency(t.clone())))
            .collect::<Result<Vec<_>>>()?;
        table.total_tokens += ids.len() as u64;
        for w in ids.windows(2) {
            *table.entries.entry((w[0], w[1])).or_insert(0) += 1;
        }
    }
    Ok(table)
}
