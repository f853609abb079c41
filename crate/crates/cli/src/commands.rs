use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use decipher::cipher::{make_cipher, split_disjoint, synth_plaintext, CipherMode, CipherSpec, PlaintextSpec};
use decipher::corpus::{build_vocab, extract_bigrams, load_corpus, BigramTable, Corpus, TokenizeOptions, Vocab};
use decipher::em::{em_init_perturbed, run_em, TranslationTable};
use decipher::eval::{accuracy, bleu, extract_lexicon, Decoder, EmissionModel, GoldLexicon, Lexicon, WeightedEmission};
use decipher::features::{init_weights, FeatureSpace, InitConfig, WeightVector};
use decipher::loglinear::LogLinearModel;
use decipher::mcmc::train_with_observer;
use decipher::ngram_lm::{train_bigram_lm, BigramLm};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{invalid, MethodArg, RunConfig};

fn open(path: &Path) -> Result<BufReader<File>> {
    if !path.is_file() {
        return Err(invalid(format!("no such file: {}", path.display())));
    }
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

pub fn read_corpus(path: &Path, tag: &str) -> Result<Corpus> {
    load_corpus(open(path)?, tag, TokenizeOptions::default()).with_context(|| format!("reading {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_text(path: &Path, corpus: &Corpus) -> Result<()> {
    fs::write(path, corpus.to_text()).with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Serialize)]
pub struct IngestSummary {
    pub sentences: usize,
    pub tokens: usize,
    pub vocab: usize,
    pub unique_bigrams: usize,
}

pub fn ingest(input: &Path, lang: &str, out_dir: &Path, keep_punct: bool, lm_k: Option<f64>) -> Result<IngestSummary> {
    let opts = TokenizeOptions {
        strip_punct: !keep_punct,
    };
    let corpus = load_corpus(open(input)?, lang, opts)?;
    let vocab = build_vocab(&corpus);
    let bigrams = extract_bigrams(&corpus, &vocab)?;
    fs::create_dir_all(out_dir)?;
    write_text(&out_dir.join("tokens.txt"), &corpus)?;
    let mut counts = vec![0u64; vocab.len()];
    for t in corpus.sentences.iter().flatten() {
        counts[vocab.id(t).expect("vocab built from corpus")] += 1;
    }
    let mut w = create(&out_dir.join("vocab.tsv"))?;
    for (word, c) in vocab.words().iter().zip(&counts) {
        writeln!(w, "{word}\t{c}")?;
    }
    w.flush()?;
    let mut w = create(&out_dir.join("bigrams.tsv"))?;
    for (a, b, c) in bigrams.iter() {
        writeln!(w, "{}\t{}\t{c}", vocab.word(a), vocab.word(b))?;
    }
    w.flush()?;
    if let Some(k) = lm_k {
        let lm = train_bigram_lm(&bigrams, &vocab, k)?;
        let mut w = create(&out_dir.join("lm.tsv"))?;
        lm.write_tsv(&mut w)?;
        w.flush()?;
    }
    Ok(IngestSummary {
        sentences: corpus.len(),
        tokens: corpus.num_tokens(),
        vocab: vocab.len(),
        unique_bigrams: bigrams.num_unique(),
    })
}

pub struct SynthOptions {
    pub input: Option<PathBuf>,
    pub sentences: usize,
    pub vocab: usize,
    pub mode: CipherMode,
    pub seed: u64,
    pub vocab_limit: Option<usize>,
    pub split: Option<f64>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct SynthSummary {
    pub source_sentences: usize,
    pub target_sentences: usize,
    pub gold_pairs: usize,
}

/// Writes source.txt (enciphered), source_plain.txt (its plaintext),
/// target.txt (language-model text) and gold.tsv.
pub fn synth(o: &SynthOptions) -> Result<SynthSummary> {
    let plain = match &o.input {
        Some(p) => read_corpus(p, "plain")?,
        None => synth_plaintext(&PlaintextSpec {
            sentences: o.sentences,
            vocab_size: o.vocab,
            rng_seed: o.seed,
            ..PlaintextSpec::default()
        })?,
    };
    let (enciphered, target) = match o.split {
        Some(r) => split_disjoint(&plain, r)?,
        None => (plain.clone(), plain),
    };
    let spec = CipherSpec {
        mode: o.mode,
        rng_seed: o.seed,
        vocab_limit: o.vocab_limit,
    };
    let (source, gold) = make_cipher(&enciphered, &spec)?;
    fs::create_dir_all(&o.out_dir)?;
    write_text(&o.out_dir.join("source.txt"), &source)?;
    write_text(&o.out_dir.join("source_plain.txt"), &enciphered)?;
    write_text(&o.out_dir.join("target.txt"), &target)?;
    let mut w = create(&o.out_dir.join("gold.tsv"))?;
    gold.write_tsv(&mut w)?;
    w.flush()?;
    Ok(SynthSummary {
        source_sentences: source.len(),
        target_sentences: target.len(),
        gold_pairs: gold.len(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Metrics {
    pub method: String,
    pub iterations: usize,
    pub samples: Option<usize>,
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bleu: Option<f64>,
    pub seconds_total: f64,
    pub seconds_per_iter: f64,
}

#[derive(Serialize)]
struct EmTrace {
    iter: usize,
    loglik: f64,
}

#[derive(Serialize)]
struct LlTrace {
    iter: usize,
    grad_norm: f64,
    accept_rate: Option<f64>,
    n_weights: usize,
}

#[derive(Serialize)]
struct Timing {
    iter: usize,
    seconds: f64,
}

/// Everything rebuilt from the inputs of a run.
pub struct Inputs {
    pub source: Corpus,
    pub source_vocab: Vocab,
    pub target_vocab: Vocab,
    pub src_bigrams: BigramTable,
    pub lm: BigramLm,
}

pub fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let source = read_corpus(&cfg.source, "src")?;
    let target = read_corpus(&cfg.target, "tgt")?;
    if source.num_tokens() == 0 || target.num_tokens() == 0 {
        return Err(invalid("source and target texts must be non-empty"));
    }
    let source_vocab = build_vocab(&source);
    let target_vocab = build_vocab(&target);
    let src_bigrams = extract_bigrams(&source, &source_vocab)?;
    let lm = train_bigram_lm(&extract_bigrams(&target, &target_vocab)?, &target_vocab, cfg.lm_k)?;
    Ok(Inputs {
        source,
        source_vocab,
        target_vocab,
        src_bigrams,
        lm,
    })
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn decode_corpus<M: EmissionModel + ?Sized>(model: &M, inputs: &Inputs, corpus: &Corpus) -> Result<Vec<Vec<String>>> {
    let decoder = Decoder::new(model, &inputs.source_vocab, &inputs.target_vocab, &inputs.lm)?;
    corpus.sentences.iter().map(|s| Ok(decoder.decode(s)?)).collect()
}

fn write_decoded(path: &Path, sentences: &[Vec<String>]) -> Result<()> {
    let mut w = create(path)?;
    for s in sentences {
        writeln!(w, "{}", s.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

fn evaluate_model<M: EmissionModel + ?Sized>(
    cfg: &RunConfig,
    inputs: &Inputs,
    model: &M,
) -> Result<(Option<f64>, Option<f64>)> {
    let lexicon = extract_lexicon(model, &inputs.source_vocab, &inputs.target_vocab);
    let mut w = create(&cfg.out_dir.join("lexicon.tsv"))?;
    lexicon.write_tsv(&mut w)?;
    w.flush()?;
    let acc = match &cfg.gold {
        Some(g) => Some(accuracy(&lexicon, &GoldLexicon::read_tsv(open(g)?)?)?),
        None => None,
    };
    let bleu_score = match &cfg.reference {
        Some(r) => {
            let reference = read_corpus(r, "ref")?;
            let decoded = decode_corpus(model, inputs, &inputs.source)?;
            write_decoded(&cfg.out_dir.join("decoded.txt"), &decoded)?;
            Some(bleu(&decoded, &reference.sentences)?)
        }
        None => None,
    };
    Ok((acc, bleu_score))
}

/// Full pipeline: inputs, LM, initialization, training, lexicon, evaluation.
pub fn train(cfg: &RunConfig) -> Result<Metrics> {
    let inputs = load_inputs(cfg)?;
    fs::create_dir_all(&cfg.out_dir)?;
    write_json(&cfg.out_dir.join("run.json"), cfg)?;
    let iters = cfg.sampler.iterations;
    let (seconds, acc, bleu_score) = match cfg.method.sampler() {
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.sampler.rng_seed);
            let init = em_init_perturbed(&inputs.source_vocab, &inputs.target_vocab, cfg.em_noise, &mut rng)?;
            let run = run_em(init, &inputs.src_bigrams, &inputs.lm, iters)?;
            let trace: Vec<EmTrace> = run
                .loglik
                .iter()
                .enumerate()
                .map(|(iter, &loglik)| EmTrace { iter, loglik })
                .collect();
            write_jsonl(&cfg.out_dir.join("trace.jsonl"), &trace)?;
            let mut w = create(&cfg.out_dir.join("table.tsv"))?;
            run.table.write_tsv(&inputs.source_vocab, &inputs.target_vocab, &mut w)?;
            w.flush()?;
            let (acc, b) = evaluate_model(cfg, &inputs, &run.table)?;
            (run.seconds, acc, b)
        }
        Some(method) => {
            let space = FeatureSpace::new(
                inputs.source_vocab.clone(),
                inputs.target_vocab.clone(),
                cfg.ortho_threshold,
                cfg.ortho,
            )?;
            let weights = init_weights(&space, InitConfig::default());
            let model = LogLinearModel::new(space, inputs.lm.clone(), weights)?;
            let mut trace = Vec::with_capacity(iters);
            let (model, record) = train_with_observer(model, &inputs.src_bigrams, method, &cfg.sampler, |r| {
                trace.push(LlTrace {
                    iter: r.iter,
                    grad_norm: r.grad_norm,
                    accept_rate: r.accept_rate,
                    n_weights: r.n_weights,
                });
            })?;
            write_jsonl(&cfg.out_dir.join("trace.jsonl"), &trace)?;
            let mut w = create(&cfg.out_dir.join("weights.tsv"))?;
            model.weights.write_tsv(&model.space, &mut w)?;
            w.flush()?;
            let (acc, b) = evaluate_model(cfg, &inputs, &model)?;
            (record.iterations.iter().map(|r| r.seconds).collect(), acc, b)
        }
    };
    let timing: Vec<Timing> = seconds
        .iter()
        .enumerate()
        .map(|(iter, &seconds)| Timing { iter, seconds })
        .collect();
    write_jsonl(&cfg.out_dir.join("timing.jsonl"), &timing)?;
    let seconds_total: f64 = seconds.iter().sum();
    let metrics = Metrics {
        method: cfg.label(),
        iterations: iters,
        samples: cfg.method.sampler().map(|_| cfg.sampler.n_samples),
        accuracy: acc,
        bleu: bleu_score,
        seconds_total,
        seconds_per_iter: seconds_total / iters as f64,
    };
    write_json(&cfg.out_dir.join("metrics.json"), &metrics)?;
    Ok(metrics)
}

#[derive(Debug, Serialize)]
pub struct Evaluation {
    pub accuracy: f64,
}

pub fn evaluate(lexicon: &Path, gold: &Path) -> Result<Evaluation> {
    let lex = Lexicon::read_tsv(open(lexicon)?)?;
    let gold = GoldLexicon::read_tsv(open(gold)?)?;
    Ok(Evaluation {
        accuracy: accuracy(&lex, &gold)?,
    })
}

/// Decode `input` with the model trained in `run_dir`. Returns the decoded
/// sentences and, given a reference, their BLEU score.
pub fn decode(run_dir: &Path, input: &Path, reference: Option<&Path>) -> Result<(Vec<Vec<String>>, Option<f64>)> {
    let cfg: RunConfig = serde_json::from_reader(open(&run_dir.join("run.json"))?)
        .with_context(|| format!("reading {}", run_dir.join("run.json").display()))?;
    let inputs = load_inputs(&cfg)?;
    let text = read_corpus(input, "src")?;
    let decoded = match cfg.method {
        MethodArg::Em => {
            let table = TranslationTable::read_tsv(
                &inputs.source_vocab,
                &inputs.target_vocab,
                open(&run_dir.join("table.tsv"))?,
            )?;
            decode_corpus(&table, &inputs, &text)?
        }
        _ => {
            let space = FeatureSpace::new(
                inputs.source_vocab.clone(),
                inputs.target_vocab.clone(),
                cfg.ortho_threshold,
                cfg.ortho,
            )?;
            let weights = WeightVector::read_tsv(&space, open(&run_dir.join("weights.tsv"))?)?;
            decode_corpus(&WeightedEmission { space: &space, weights: &weights }, &inputs, &text)?
        }
    };
    let score = match reference {
        Some(r) => Some(bleu(&decoded, &read_corpus(r, "ref")?.sentences)?),
        None => None,
    };
    Ok((decoded, score))
}

/// One row per configuration: method, seconds_per_iter, accuracy.
pub fn compare(configs: &[RunConfig]) -> Result<String> {
    if configs.len() < 2 {
        return Err(invalid("compare needs at least two configurations"));
    }
    let mut out = String::from("method\tseconds_per_iter\taccuracy\n");
    for cfg in configs {
        let m = train(cfg)?;
        let acc = m.accuracy.map_or_else(|| "NA".to_string(), |a| format!("{a:.2}"));
        out.push_str(&format!("{}\t{:.6}\t{}\n", m.method, m.seconds_per_iter, acc));
    }
    Ok(out)
}
