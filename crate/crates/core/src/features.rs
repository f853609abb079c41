//! Unigram features, their bigram composition, sparse weights and scoring.
//!
//! Two kinds of features fire for a source/target word pair `(f, e)`:
//! a translation indicator keyed by the pair itself, and a single shared
//! orthographic indicator that fires when the normalized edit distance
//! between the spellings is below a threshold.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::corpus::{Vocab, WordId};
use crate::error::{Error, Result};

pub const DEFAULT_ORTHO_THRESHOLD: f64 = 0.3;

fn levenshtein(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = diag + usize::from(ca != cb);
            diag = row[j + 1];
            row[j + 1] = sub.min(row[j] + 1).min(diag + 1);
        }
    }
    row[b.len()]
}

/// Levenshtein distance over Unicode scalar values divided by the longer length.
pub fn normalized_edit_distance(f: &str, e: &str) -> Result<f64> {
    let a: Vec<char> = f.chars().collect();
    let b: Vec<char> = e.chars().collect();
    if a.is_empty() || b.is_empty() {
        return Err(Error::Argument("edit distance of an empty token".into()));
    }
    Ok(levenshtein(&a, &b) as f64 / a.len().max(b.len()) as f64)
}

/// Features fired by one `(f, e)` word pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureVector {
    pub translation: (WordId, WordId),
    pub ortho_fired: bool,
}

/// Source and target vocabularies plus the precomputed orthographic relation.
#[derive(Debug, Clone)]
pub struct FeatureSpace {
    source: Vocab,
    target: Vocab,
    threshold: f64,
    ortho_enabled: bool,
    ortho_by_source: Vec<Vec<WordId>>,
    ortho_by_target: Vec<Vec<WordId>>,
}

impl FeatureSpace {
    /// Scans all vocabulary pairs once when `ortho_enabled` is set.
    pub fn new(source: Vocab, target: Vocab, threshold: f64, ortho_enabled: bool) -> Result<Self> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::Argument(format!("threshold {threshold} outside [0, 1]")));
        }
        let mut ortho_by_source = vec![Vec::new(); source.len()];
        let mut ortho_by_target = vec![Vec::new(); target.len()];
        if ortho_enabled {
            let src: Vec<Vec<char>> = source.words().iter().map(|w| w.chars().collect()).collect();
            let tgt: Vec<Vec<char>> = target.words().iter().map(|w| w.chars().collect()).collect();
            for (f, fc) in src.iter().enumerate() {
                for (e, ec) in tgt.iter().enumerate() {
                    let longest = fc.len().max(ec.len());
                    if longest == 0 || fc.is_empty() || ec.is_empty() {
                        continue;
                    }
                    // the length gap alone is a lower bound on the distance
                    if fc.len().abs_diff(ec.len()) as f64 / longest as f64 >= threshold {
                        continue;
                    }
                    if (levenshtein(fc, ec) as f64 / longest as f64) < threshold {
                        ortho_by_source[f].push(e);
                        ortho_by_target[e].push(f);
                    }
                }
            }
        }
        Ok(FeatureSpace {
            source,
            target,
            threshold,
            ortho_enabled,
            ortho_by_source,
            ortho_by_target,
        })
    }

    pub fn source(&self) -> &Vocab {
        &self.source
    }

    pub fn target(&self) -> &Vocab {
        &self.target
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn ortho_enabled(&self) -> bool {
        self.ortho_enabled
    }

    #[inline]
    pub fn is_ortho(&self, f: WordId, e: WordId) -> bool {
        self.ortho_by_source[f].binary_search(&e).is_ok()
    }

    /// Target words orthographically similar to `f`, ascending.
    pub fn ortho_targets(&self, f: WordId) -> &[WordId] {
        &self.ortho_by_source[f]
    }

    /// Source words orthographically similar to `e`, ascending.
    pub fn ortho_sources(&self, e: WordId) -> &[WordId] {
        &self.ortho_by_target[e]
    }

    pub fn num_ortho_pairs(&self) -> usize {
        self.ortho_by_source.iter().map(Vec::len).sum()
    }

    pub fn phi(&self, f: WordId, e: WordId) -> FeatureVector {
        FeatureVector {
            translation: (f, e),
            ortho_fired: self.is_ortho(f, e),
        }
    }

    /// `phi(f1, e1) + phi(f2, e2)`.
    pub fn bigram_phi(&self, f: (WordId, WordId), e: (WordId, WordId)) -> FeatureCounts {
        let mut out = FeatureCounts::default();
        out.add_bigram(self, f, e, 1.0);
        out
    }
}

/// A sparse real-valued vector over the feature space: feature counts,
/// expectations and gradients all use this shape.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureCounts {
    pub translation: BTreeMap<(WordId, WordId), f64>,
    pub ortho: f64,
}

impl FeatureCounts {
    #[inline]
    pub fn add_pair(&mut self, space: &FeatureSpace, f: WordId, e: WordId, scale: f64) {
        *self.translation.entry((f, e)).or_insert(0.0) += scale;
        if space.is_ortho(f, e) {
            self.ortho += scale;
        }
    }

    #[inline]
    pub fn add_bigram(&mut self, space: &FeatureSpace, f: (WordId, WordId), e: (WordId, WordId), scale: f64) {
        self.add_pair(space, f.0, e.0, scale);
        self.add_pair(space, f.1, e.1, scale);
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &FeatureCounts, scale: f64) {
        for (&k, &v) in &other.translation {
            *self.translation.entry(k).or_insert(0.0) += scale * v;
        }
        self.ortho += scale * other.ortho;
    }

    pub fn scale(&mut self, s: f64) {
        self.translation.values_mut().for_each(|v| *v *= s);
        self.ortho *= s;
    }

    pub fn get(&self, f: WordId, e: WordId) -> f64 {
        self.translation.get(&(f, e)).copied().unwrap_or(0.0)
    }

    pub fn l2_norm(&self) -> f64 {
        (self.translation.values().map(|v| v * v).sum::<f64>() + self.ortho * self.ortho).sqrt()
    }

    /// Largest absolute componentwise difference; missing entries count as zero.
    pub fn linf_distance(&self, other: &FeatureCounts) -> f64 {
        let mut worst = (self.ortho - other.ortho).abs();
        for (k, v) in &self.translation {
            worst = worst.max((v - other.translation.get(k).copied().unwrap_or(0.0)).abs());
        }
        for (k, v) in &other.translation {
            if !self.translation.contains_key(k) {
                worst = worst.max(v.abs());
            }
        }
        worst
    }

    pub fn dot(&self, other: &FeatureCounts) -> f64 {
        let (small, large) = if self.translation.len() <= other.translation.len() {
            (self, other)
        } else {
            (other, self)
        };
        small
            .translation
            .iter()
            .map(|(k, v)| v * large.translation.get(k).copied().unwrap_or(0.0))
            .sum::<f64>()
            + self.ortho * other.ortho
    }
}

/// Append-only accumulator for [`FeatureCounts`]. Entries are summed once, on
/// [`FeatureBuilder::finish`], in the order they were added.
#[derive(Debug, Clone, Default)]
pub struct FeatureBuilder {
    entries: Vec<((WordId, WordId), f64)>,
    ortho: f64,
}

impl FeatureBuilder {
    pub fn with_capacity(n: usize) -> Self {
        FeatureBuilder {
            entries: Vec::with_capacity(n),
            ortho: 0.0,
        }
    }

    #[inline]
    pub fn add_pair(&mut self, space: &FeatureSpace, f: WordId, e: WordId, scale: f64) {
        self.entries.push(((f, e), scale));
        if space.is_ortho(f, e) {
            self.ortho += scale;
        }
    }

    #[inline]
    pub fn add_bigram(&mut self, space: &FeatureSpace, f: (WordId, WordId), e: (WordId, WordId), scale: f64) {
        self.add_pair(space, f.0, e.0, scale);
        self.add_pair(space, f.1, e.1, scale);
    }

    /// `self += scale * counts`
    pub fn add_counts(&mut self, counts: &FeatureCounts, scale: f64) {
        self.entries.extend(counts.translation.iter().map(|(&k, &v)| (k, scale * v)));
        self.ortho += scale * counts.ortho;
    }

    pub fn finish(mut self) -> FeatureCounts {
        // stable, so repeated keys keep their insertion order when summed
        self.entries.sort_by_key(|e| e.0);
        let mut merged: Vec<((WordId, WordId), f64)> = Vec::with_capacity(self.entries.len());
        for (k, v) in self.entries {
            match merged.last_mut() {
                Some((last, acc)) if *last == k => *acc += v,
                _ => merged.push((k, 0.0 + v)),
            }
        }
        FeatureCounts {
            translation: merged.into_iter().collect(),
            ortho: self.ortho,
        }
    }
}

/// Model parameters: sparse translation weights plus one orthographic weight.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightVector {
    pub translation: BTreeMap<(WordId, WordId), f64>,
    pub ortho_weight: f64,
}

impl WeightVector {
    #[inline]
    pub fn get(&self, f: WordId, e: WordId) -> f64 {
        self.translation.get(&(f, e)).copied().unwrap_or(0.0)
    }

    pub fn contains(&self, f: WordId, e: WordId) -> bool {
        self.translation.contains_key(&(f, e))
    }

    /// Stored `(e, weight)` entries for source word `f`.
    pub fn support(&self, f: WordId) -> impl Iterator<Item = (WordId, f64)> + '_ {
        self.translation.range((f, 0)..=(f, usize::MAX)).map(|(&(_, e), &w)| (e, w))
    }

    /// `w . phi(f, e)`
    #[inline]
    pub fn unit_score(&self, space: &FeatureSpace, f: WordId, e: WordId) -> f64 {
        let mut s = self.get(f, e);
        if space.is_ortho(f, e) {
            s += self.ortho_weight;
        }
        s
    }

    /// `w . Phi(f1 f2, e1 e2)`; pairs absent from the sparse map contribute 0.
    #[inline]
    pub fn score(&self, space: &FeatureSpace, f: (WordId, WordId), e: (WordId, WordId)) -> f64 {
        self.unit_score(space, f.0, e.0) + self.unit_score(space, f.1, e.1)
    }

    /// Fills `out[e] = w . phi(f, e)` for every target word.
    pub fn fill_unit_scores(&self, space: &FeatureSpace, f: WordId, out: &mut [f64]) {
        out.fill(0.0);
        for &e in space.ortho_targets(f) {
            out[e] += self.ortho_weight;
        }
        for (e, w) in self.support(f) {
            out[e] += w;
        }
    }

    /// Fills `out[f] = w . phi(f, e)` for every source word. Walks the whole map.
    pub fn fill_unit_scores_for_target(&self, space: &FeatureSpace, e: WordId, out: &mut [f64]) {
        out.fill(0.0);
        for &f in space.ortho_sources(e) {
            out[f] += self.ortho_weight;
        }
        for (&(f, e2), &w) in &self.translation {
            if e2 == e {
                out[f] += w;
            }
        }
    }

    /// `self += step * grad`. Translation features named in `grad` are inserted
    /// (at zero) before being updated; the orthographic weight only moves when
    /// the feature space has it enabled.
    pub fn apply(&mut self, space: &FeatureSpace, grad: &FeatureCounts, step: f64) {
        for (&k, &g) in &grad.translation {
            *self.translation.entry(k).or_insert(0.0) += step * g;
        }
        if space.ortho_enabled() {
            self.ortho_weight += step * grad.ortho;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.ortho_weight.is_finite() && self.translation.values().all(|w| w.is_finite())
    }

    pub fn len(&self) -> usize {
        self.translation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.translation.is_empty()
    }
}

impl WeightVector {
    /// TSV dump: an `#ortho_weight` header when the feature is enabled, then
    /// `source <TAB> target <TAB> weight` for every stored pair.
    pub fn write_tsv<W: Write>(&self, space: &FeatureSpace, mut w: W) -> Result<()> {
        if space.ortho_enabled() {
            writeln!(w, "{ORTHO_HEADER}\t{}", self.ortho_weight)?;
        }
        for (&(f, e), &v) in &self.translation {
            writeln!(w, "{}\t{}\t{}", space.source().word(f), space.target().word(e), v)?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(space: &FeatureSpace, reader: R) -> Result<Self> {
        let mut out = WeightVector::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |msg: &str| Error::Parse {
                line: i + 1,
                msg: msg.to_string(),
            };
            let cols: Vec<&str> = line.split('\t').collect();
            match cols[..] {
                [ORTHO_HEADER, v] => out.ortho_weight = v.parse().map_err(|_| parse_err("bad weight"))?,
                [f, e, v] => {
                    let f = space.source().id(f).ok_or_else(|| parse_err("unknown source word"))?;
                    let e = space.target().id(e).ok_or_else(|| parse_err("unknown target word"))?;
                    out.translation.insert((f, e), v.parse().map_err(|_| parse_err("bad weight"))?);
                }
                _ => return Err(parse_err("expected `source<TAB>target<TAB>weight`")),
            }
        }
        Ok(out)
    }
}

const ORTHO_HEADER: &str = "#ortho_weight";

/// Initial values for [`init_weights`].
#[derive(Debug, Clone, Copy)]
pub struct InitConfig {
    pub ortho_weight: f64,
    pub seed_weight: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            ortho_weight: 1.0,
            seed_weight: 0.1,
        }
    }
}

/// With orthography enabled every orthographically similar pair is seeded with
/// a small translation weight. Without it nothing is stored: all weights are zero.
pub fn init_weights(space: &FeatureSpace, cfg: InitConfig) -> WeightVector {
    if !space.ortho_enabled() {
        return WeightVector::default();
    }
    let mut w = WeightVector {
        translation: BTreeMap::new(),
        ortho_weight: cfg.ortho_weight,
    };
    for f in 0..space.source().len() {
        for &e in space.ortho_targets(f) {
            w.translation.insert((f, e), cfg.seed_weight);
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn space(src: &[&str], tgt: &[&str], ortho: bool) -> FeatureSpace {
        FeatureSpace::new(
            Vocab::from_words(src.iter().copied()),
            Vocab::from_words(tgt.iter().copied()),
            DEFAULT_ORTHO_THRESHOLD,
            ortho,
        )
        .unwrap()
    }

    #[test]
    fn weight_dump_round_trip() {
        for ortho in [true, false] {
            let sp = space(&["minuto", "perro"], &["minute", "dog"], ortho);
            let mut w = init_weights(&sp, InitConfig::default());
            w.translation.insert((1, 1), -0.1 / 3.0);
            let mut buf = Vec::new();
            w.write_tsv(&sp, &mut buf).unwrap();
            let text = String::from_utf8(buf.clone()).unwrap();
            assert_eq!(text.contains("ortho_weight"), ortho);
            assert_eq!(WeightVector::read_tsv(&sp, &buf[..]).unwrap(), w);
        }
    }

    #[test]
    fn edit_distance_examples() {
        assert_eq!(normalized_edit_distance("abc", "abc").unwrap(), 0.0);
        assert!((normalized_edit_distance("minuto", "minute").unwrap() - 1.0 / 6.0).abs() < 1e-12);
        assert_eq!(normalized_edit_distance("silencio", "silence").unwrap(), 0.25);
        assert_eq!(normalized_edit_distance("madre", "stone").unwrap(), 0.8);
        assert!(normalized_edit_distance("", "a").is_err());
        // counted in scalar values, so one accented substitution costs 1
        assert_eq!(normalized_edit_distance("café", "cafe").unwrap(), 0.25);
    }

    #[test]
    fn phi_threshold() {
        let s = space(&["minuto", "madre", "x"], &["minute", "stone", "x"], true);
        assert!(s.phi(0, 0).ortho_fired);
        assert!(!s.phi(1, 1).ortho_fired);
        assert!(s.phi(2, 2).ortho_fired);
        assert_eq!(s.phi(1, 1).translation, (1, 1));
        let off = space(&["minuto"], &["minute"], false);
        assert!(!off.phi(0, 0).ortho_fired);
    }

    #[test]
    fn bigram_phi_is_additive() {
        let s = space(&["minuto", "silencio"], &["minute", "silence"], true);
        let both = s.bigram_phi((0, 1), (0, 1));
        assert_eq!(both.ortho, 2.0);
        let same = s.bigram_phi((0, 0), (1, 1));
        assert_eq!(same.translation.len(), 1);
        assert_eq!(same.get(0, 1), 2.0);
        assert_eq!(same.ortho, 0.0);
        let disjoint = s.bigram_phi((0, 1), (1, 0));
        assert_eq!(disjoint.get(0, 1), 1.0);
        assert_eq!(disjoint.get(1, 0), 1.0);
    }

    #[test]
    fn score_examples() {
        let s = space(&["minuto", "silencio", "perro"], &["minute", "silence", "table"], true);
        let zero = WeightVector::default();
        assert_eq!(zero.score(&s, (0, 1), (2, 0)), 0.0);
        let ortho_only = WeightVector {
            ortho_weight: 1.0,
            ..Default::default()
        };
        assert_eq!(ortho_only.score(&s, (0, 1), (0, 1)), 2.0);
        let mut w = WeightVector::default();
        w.translation.insert((2, 2), 0.1);
        assert!((w.score(&s, (2, 2), (2, 2)) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn init_weights_examples() {
        let off = space(&["minuto"], &["minute"], false);
        let w = init_weights(&off, InitConfig::default());
        assert!(w.is_empty());
        assert_eq!(w.ortho_weight, 0.0);

        let on = space(&["minuto", "madre"], &["stone", "minute"], true);
        let w = init_weights(&on, InitConfig::default());
        assert_eq!(w.get(0, 1), 0.1);
        assert_eq!(w.len(), 1);
        assert_eq!(w.ortho_weight, 1.0);

        let disjoint = space(&["абв", "где"], &["xyz", "uvw"], true);
        let w = init_weights(&disjoint, InitConfig::default());
        assert!(w.is_empty());
        assert_eq!(w.ortho_weight, 1.0);
    }

    #[test]
    fn apply_inserts_and_respects_disabled_ortho() {
        let s = space(&["a"], &["b"], false);
        let mut w = WeightVector::default();
        let mut g = FeatureCounts::default();
        g.translation.insert((0, 0), 2.0);
        g.ortho = 5.0;
        w.apply(&s, &g, 0.5);
        assert_eq!(w.get(0, 0), 1.0);
        assert_eq!(w.ortho_weight, 0.0);
    }

    #[test]
    fn unit_score_rows_match_pointwise() {
        let s = space(&["minuto", "silencio"], &["minute", "silence", "dog"], true);
        let mut w = init_weights(&s, InitConfig::default());
        w.translation.insert((1, 2), -0.7);
        let mut row = vec![0.0; 3];
        w.fill_unit_scores(&s, 1, &mut row);
        for e in 0..3 {
            assert_eq!(row[e], w.unit_score(&s, 1, e));
        }
        let mut col = vec![0.0; 2];
        w.fill_unit_scores_for_target(&s, 2, &mut col);
        for f in 0..2 {
            assert_eq!(col[f], w.unit_score(&s, f, 2));
        }
    }

    proptest! {
        #[test]
        fn edit_distance_matches_reference(a in "[a-dé]{1,8}", b in "[a-dé]{1,8}") {
            let d = normalized_edit_distance(&a, &b).unwrap();
            let reference = strsim::levenshtein(&a, &b) as f64
                / a.chars().count().max(b.chars().count()) as f64;
            prop_assert!((d - reference).abs() < 1e-12);
            prop_assert!((d - normalized_edit_distance(&b, &a).unwrap()).abs() < 1e-12);
            prop_assert!(d <= 1.0);
            prop_assert_eq!(d == 0.0, a == b);
        }

        #[test]
        fn prefiltered_scan_matches_brute_force(
            src in prop::collection::btree_set("[ab]{1,6}", 1..6),
            tgt in prop::collection::btree_set("[ab]{1,6}", 1..6),
            threshold in 0.0f64..1.0,
        ) {
            let s = FeatureSpace::new(
                Vocab::from_words(src.iter().cloned()),
                Vocab::from_words(tgt.iter().cloned()),
                threshold,
                true,
            ).unwrap();
            for (f, fw) in src.iter().enumerate() {
                for (e, ew) in tgt.iter().enumerate() {
                    let expected = normalized_edit_distance(fw, ew).unwrap() < threshold;
                    prop_assert_eq!(s.is_ortho(f, e), expected);
                }
            }
        }

        #[test]
        fn score_is_linear(
            w1 in prop::collection::vec(-2.0f64..2.0, 6),
            w2 in prop::collection::vec(-2.0f64..2.0, 6),
            o1 in -2.0f64..2.0, o2 in -2.0f64..2.0, alpha in -3.0f64..3.0,
            f1 in 0usize..2, f2 in 0usize..2, e1 in 0usize..3, e2 in 0usize..3,
        ) {
            let s = space(&["minuto", "silencio"], &["minute", "silence", "dog"], true);
            let make = |v: &[f64], o: f64| WeightVector {
                translation: (0..6).map(|i| ((i / 3, i % 3), v[i])).collect(),
                ortho_weight: o,
            };
            let a = make(&w1, o1);
            let b = make(&w2, o2);
            let combo = make(
                &w1.iter().zip(&w2).map(|(x, y)| alpha * x + y).collect::<Vec<_>>(),
                alpha * o1 + o2,
            );
            let lhs = combo.score(&s, (f1, f2), (e1, e2));
            let rhs = alpha * a.score(&s, (f1, f2), (e1, e2)) + b.score(&s, (f1, f2), (e1, e2));
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }
    }
}
