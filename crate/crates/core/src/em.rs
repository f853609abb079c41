//! Exact EM over the generative bigram substitution model
//! `p(f1 f2) = sum_{e1 e2} p(e1 e2) p(f1|e1) p(f2|e2)`.

use std::io::{BufRead, Write};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use crate::corpus::{BigramTable, Vocab, WordId};
use crate::error::{Error, Result};
use crate::ngram_lm::BigramLm;

/// Dense `p(f|e)` table, one row per target word.
#[derive(Debug, Clone, PartialEq)]
pub struct TranslationTable {
    target_size: usize,
    source_size: usize,
    probs: Vec<f64>,
}

impl TranslationTable {
    pub fn target_size(&self) -> usize {
        self.target_size
    }

    pub fn source_size(&self) -> usize {
        self.source_size
    }

    /// `p(f | e)`
    #[inline]
    pub fn get(&self, e: WordId, f: WordId) -> f64 {
        self.probs[e * self.source_size + f]
    }

    pub fn row(&self, e: WordId) -> &[f64] {
        &self.probs[e * self.source_size..(e + 1) * self.source_size]
    }

    /// Build from explicit rows; each row is renormalized.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let target_size = rows.len();
        let source_size = rows.first().map_or(0, Vec::len);
        if target_size == 0 || source_size == 0 {
            return Err(Error::Argument("empty translation table".into()));
        }
        let mut probs = Vec::with_capacity(target_size * source_size);
        for r in rows {
            if r.len() != source_size {
                return Err(Error::Argument("ragged translation table".into()));
            }
            let s: f64 = r.iter().sum();
            if !(s > 0.0) || r.iter().any(|&p| p < 0.0) {
                return Err(Error::Argument("translation row must be nonnegative with positive mass".into()));
            }
            probs.extend(r.iter().map(|p| p / s));
        }
        Ok(TranslationTable {
            target_size,
            source_size,
            probs,
        })
    }

    /// TSV dump `e <TAB> f <TAB> p(f|e)`; entries below 1e-6 are omitted.
    pub fn write_tsv<W: Write>(&self, source: &Vocab, target: &Vocab, mut w: W) -> Result<()> {
        for e in 0..self.target_size {
            for f in 0..self.source_size {
                let p = self.get(e, f);
                if p >= 1e-6 {
                    writeln!(w, "{}\t{}\t{}", target.word(e), source.word(f), p)?;
                }
            }
        }
        Ok(())
    }

    /// Load a [`TranslationTable::write_tsv`] dump. Missing entries are zero and
    /// every row is renormalized.
    pub fn read_tsv<R: BufRead>(source: &Vocab, target: &Vocab, reader: R) -> Result<Self> {
        let mut rows = vec![vec![0.0; source.len()]; target.len()];
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
            let [e, f, p] = cols[..] else {
                return Err(parse_err("expected `target<TAB>source<TAB>prob`"));
            };
            let e = target.id(e).ok_or_else(|| parse_err("unknown target word"))?;
            let f = source.id(f).ok_or_else(|| parse_err("unknown source word"))?;
            rows[e][f] = p.parse().map_err(|_| parse_err("bad probability"))?;
        }
        Self::from_rows(rows)
    }
}

/// Uniform `p(f|e) = 1/|V_F|`.
pub fn em_init(source: &Vocab, target: &Vocab) -> Result<TranslationTable> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::Argument("EM needs non-empty vocabularies".into()));
    }
    let (t, s) = (target.len(), source.len());
    Ok(TranslationTable {
        target_size: t,
        source_size: s,
        probs: vec![1.0 / s as f64; t * s],
    })
}

/// Uniform table with multiplicative noise `1 + noise * U(0,1)` before row
/// renormalization. From an exactly uniform table the posterior does not depend
/// on the source words, so EM would stay at that fixed point forever.
pub fn em_init_perturbed<R: Rng + ?Sized>(
    source: &Vocab,
    target: &Vocab,
    noise: f64,
    rng: &mut R,
) -> Result<TranslationTable> {
    let base = em_init(source, target)?;
    let rows = (0..base.target_size)
        .map(|_| (0..base.source_size).map(|_| 1.0 + noise * rng.gen::<f64>()).collect())
        .collect();
    TranslationTable::from_rows(rows)
}

const BLOCK: usize = 256;

struct Posterior {
    f1: WordId,
    f2: WordId,
    count: f64,
    first: Vec<f64>,
    second: Vec<f64>,
    log_mass: f64,
}

fn posterior(table: &TranslationTable, joint: &[f64], f1: WordId, f2: WordId, count: u64) -> Result<Posterior> {
    let v = table.target_size;
    let a: Vec<f64> = (0..v).map(|e| table.get(e, f1)).collect();
    let b: Vec<f64> = (0..v).map(|e| table.get(e, f2)).collect();
    let amax = a.iter().cloned().fold(0.0, f64::max);
    let bmax = b.iter().cloned().fold(0.0, f64::max);
    let degenerate = || Error::NumericalDegeneracy(format!("bigram ({f1}, {f2}) has zero posterior mass"));
    if amax <= 0.0 || bmax <= 0.0 {
        return Err(degenerate());
    }
    let a: Vec<f64> = a.iter().map(|x| x / amax).collect();
    let b: Vec<f64> = b.iter().map(|x| x / bmax).collect();
    let mut first = vec![0.0; v];
    let mut second = vec![0.0; v];
    for e1 in 0..v {
        let row = &joint[e1 * v..(e1 + 1) * v];
        let ae = a[e1];
        let mut acc = 0.0;
        for e2 in 0..v {
            acc += row[e2] * b[e2];
            second[e2] += ae * row[e2];
        }
        first[e1] = ae * acc;
    }
    let z: f64 = first.iter().sum();
    if !(z > 0.0) {
        return Err(degenerate());
    }
    for e in 0..v {
        first[e] /= z;
        second[e] *= b[e] / z;
    }
    Ok(Posterior {
        f1,
        f2,
        count: count as f64,
        first,
        second,
        log_mass: z.ln() + amax.ln() + bmax.ln(),
    })
}

fn check_shapes(table: &TranslationTable, src: &BigramTable, lm: &BigramLm) -> Result<()> {
    if lm.size() != table.target_size {
        return Err(Error::Argument(format!(
            "table has {} target rows but the LM has {} words",
            table.target_size,
            lm.size()
        )));
    }
    if let Some((a, b, _)) = src.iter().find(|&(a, b, _)| a >= table.source_size || b >= table.source_size) {
        return Err(Error::Index {
            index: a.max(b),
            size: table.source_size,
        });
    }
    Ok(())
}

fn iterate_with_joint(table: &TranslationTable, src: &BigramTable, joint: &[f64]) -> Result<(TranslationTable, f64)> {
    let (v, s) = (table.target_size, table.source_size);
    let mut counts = vec![0.0; v * s];
    let mut loglik = 0.0;
    let bigrams: Vec<(WordId, WordId, u64)> = src.iter().collect();
    for block in bigrams.chunks(BLOCK) {
        let posts = block
            .par_iter()
            .map(|&(f1, f2, c)| posterior(table, joint, f1, f2, c))
            .collect::<Result<Vec<_>>>()?;
        // merged in bigram order so the sums do not depend on scheduling
        for p in posts {
            loglik += p.count * p.log_mass;
            for e in 0..v {
                counts[e * s + p.f1] += p.count * p.first[e];
                counts[e * s + p.f2] += p.count * p.second[e];
            }
        }
    }
    let mut probs = table.probs.clone();
    for e in 0..v {
        let row = &counts[e * s..(e + 1) * s];
        let total: f64 = row.iter().sum();
        // a target word that never receives mass keeps its previous row
        if total > 0.0 {
            for f in 0..s {
                probs[e * s + f] = row[f] / total;
            }
        }
    }
    Ok((
        TranslationTable {
            target_size: v,
            source_size: s,
            probs,
        },
        loglik,
    ))
}

/// One EM step. The returned log-likelihood is that of the input table.
pub fn em_iterate(table: &TranslationTable, src: &BigramTable, lm: &BigramLm) -> Result<(TranslationTable, f64)> {
    check_shapes(table, src, lm)?;
    iterate_with_joint(table, src, &lm.dense_joint())
}

#[derive(Debug, Clone)]
pub struct EmRun {
    pub table: TranslationTable,
    pub loglik: Vec<f64>,
    pub seconds: Vec<f64>,
}

pub fn run_em(init: TranslationTable, src: &BigramTable, lm: &BigramLm, iters: usize) -> Result<EmRun> {
    if iters == 0 {
        return Err(Error::Argument("EM needs at least one iteration".into()));
    }
    check_shapes(&init, src, lm)?;
    let joint = lm.dense_joint();
    let mut table = init;
    let mut loglik = Vec::with_capacity(iters);
    let mut seconds = Vec::with_capacity(iters);
    for _ in 0..iters {
        let start = Instant::now();
        let (next, ll) = iterate_with_joint(&table, src, &joint)?;
        seconds.push(start.elapsed().as_secs_f64());
        loglik.push(ll);
        table = next;
    }
    Ok(EmRun { table, loglik, seconds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ngram_lm::train_bigram_lm;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tsv_round_trip() {
        let (sv, tv) = (vocab("f", 3), vocab("e", 2));
        let t = TranslationTable::from_rows(vec![vec![0.5, 0.25, 0.25], vec![0.0, 1.0, 0.0]]).unwrap();
        let mut buf = Vec::new();
        t.write_tsv(&sv, &tv, &mut buf).unwrap();
        assert_eq!(TranslationTable::read_tsv(&sv, &tv, &buf[..]).unwrap(), t);
        assert!(TranslationTable::read_tsv(&sv, &tv, &b"e0\tzz\t1\n"[..]).is_err());
    }

    fn vocab(prefix: &str, n: usize) -> Vocab {
        Vocab::from_words((0..n).map(|i| format!("{prefix}{i}")))
    }

    fn row_sums_ok(t: &TranslationTable) -> bool {
        (0..t.target_size()).all(|e| (t.row(e).iter().sum::<f64>() - 1.0).abs() < 1e-9)
    }

    #[test]
    fn init_is_uniform() {
        let t = em_init(&vocab("f", 4), &vocab("e", 3)).unwrap();
        assert!(t.probs.iter().all(|&p| p == 0.25));
        let t = em_init(&vocab("f", 1), &vocab("e", 2)).unwrap();
        assert!(t.probs.iter().all(|&p| p == 1.0));
        let t = em_init(&vocab("f", 7), &vocab("e", 5)).unwrap();
        assert!(row_sums_ok(&t));
        assert!(em_init(&Vocab::new(), &vocab("e", 1)).is_err());
    }

    #[test]
    fn single_word_is_forced() {
        let src = BigramTable::from_counts([(0, 0, 3)]);
        let lm = train_bigram_lm(&BigramTable::from_counts([(0, 0, 2)]), &vocab("e", 1), 0.0).unwrap();
        let t0 = em_init(&vocab("f", 1), &vocab("e", 1)).unwrap();
        let (t1, ll) = em_iterate(&t0, &src, &lm).unwrap();
        assert_eq!(t1, t0);
        assert!((ll - 3.0 * lm.prob(0, 0).ln()).abs() < 1e-12);
    }

    #[test]
    fn two_word_toy_hand_posterior() {
        // src (x, y); the LM only allows (a, b), so x must come from a and y from b
        let src = BigramTable::from_counts([(0, 1, 1)]);
        let lm = train_bigram_lm(&BigramTable::from_counts([(0, 1, 1)]), &vocab("e", 2), 0.0).unwrap();
        let t0 = em_init(&vocab("f", 2), &vocab("e", 2)).unwrap();
        let (t1, ll) = em_iterate(&t0, &src, &lm).unwrap();
        assert!((t1.get(0, 0) - 1.0).abs() < 1e-12);
        assert!((t1.get(1, 1) - 1.0).abs() < 1e-12);
        assert!((ll - 0.25f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_mass_is_degenerate() {
        let src = BigramTable::from_counts([(0, 1, 1)]);
        let lm = train_bigram_lm(&BigramTable::from_counts([(0, 1, 1)]), &vocab("e", 2), 0.0).unwrap();
        let t = TranslationTable::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(em_iterate(&t, &src, &lm), Err(Error::NumericalDegeneracy(_))));
    }

    #[test]
    fn one_iteration_run_matches_iterate() {
        let src = BigramTable::from_counts([(0, 1, 2), (1, 2, 1), (2, 0, 4)]);
        let lm = train_bigram_lm(&BigramTable::from_counts([(0, 1, 1), (1, 1, 3)]), &vocab("e", 2), 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t0 = em_init_perturbed(&vocab("f", 3), &vocab("e", 2), 0.1, &mut rng).unwrap();
        let (t1, ll) = em_iterate(&t0, &src, &lm).unwrap();
        let run = run_em(t0, &src, &lm, 1).unwrap();
        assert_eq!(run.table, t1);
        assert_eq!(run.loglik, vec![ll]);
        assert_eq!(run.seconds.len(), 1);
    }

    #[test]
    fn tsv_omits_tiny_entries() {
        let t = TranslationTable::from_rows(vec![vec![1.0, 1e-9], vec![0.5, 0.5]]).unwrap();
        let mut buf = Vec::new();
        t.write_tsv(&vocab("f", 2), &vocab("e", 2), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("e0\tf0\t"));
    }

    fn instance() -> impl Strategy<Value = (usize, usize, Vec<(usize, usize, u64)>, Vec<(usize, usize, u64)>, u64)> {
        (1usize..5, 1usize..5).prop_flat_map(|(vf, ve)| {
            (
                Just(vf),
                Just(ve),
                prop::collection::vec((0..vf, 0..vf, 1u64..5), 1..8),
                prop::collection::vec((0..ve, 0..ve, 1u64..5), 0..8),
                any::<u64>(),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn loglik_is_monotone_and_rows_stochastic((vf, ve, src, tgt, seed) in instance()) {
            let lm = train_bigram_lm(&BigramTable::from_counts(tgt), &vocab("e", ve), 0.1).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t0 = em_init_perturbed(&vocab("f", vf), &vocab("e", ve), 0.5, &mut rng).unwrap();
            let run = run_em(t0, &BigramTable::from_counts(src), &lm, 20).unwrap();
            for w in run.loglik.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-9, "{} then {}", w[0], w[1]);
            }
            prop_assert!(row_sums_ok(&run.table));
            prop_assert!(run.table.probs.iter().all(|&p| p >= 0.0));
        }
    }
}
