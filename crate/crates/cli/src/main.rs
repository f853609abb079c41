//! `decipher`: learn a word-level translation lexicon from two unrelated
//! monolingual texts.

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use decipher::cipher::CipherMode;

use crate::config::{env_seed, invalid, Invalid, TrainOptions};

#[derive(Parser)]
#[command(name = "decipher", version, about)]
struct Cli {
    /// Worker threads (defaults to all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Opaque,
    Cognate,
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize a text and write its vocabulary, bigram counts and optionally an LM
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "xx")]
        lang: String,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        keep_punct: bool,
        /// Also write a smoothed bigram LM dump
        #[arg(long)]
        lm_k: Option<f64>,
    },
    /// Build a synthetic cipher instance with a gold lexicon
    Synth {
        /// Plaintext to encipher; a random Markov text is generated when absent
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 500)]
        sentences: usize,
        #[arg(long, default_value_t = 150)]
        vocab: usize,
        #[arg(long, value_enum, default_value = "cognate")]
        mode: ModeArg,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        vocab_limit: Option<usize>,
        /// Encipher the first part of the text and keep the rest as target text
        #[arg(long)]
        split: Option<f64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train a model and write lexicon.tsv, metrics.json and trace.jsonl
    Train {
        /// TOML file with the same keys as the flags (snake_case)
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        opts: TrainOptions,
        /// Disable the orthographic feature
        #[arg(long)]
        no_ortho: bool,
    },
    /// Score a lexicon against a gold lexicon
    Evaluate {
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long)]
        gold: PathBuf,
    },
    /// Viterbi-decode source text with a trained run
    Decode {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Plaintext reference for BLEU
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Write decoded text here instead of stdout
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train several configurations and print a method/time/accuracy table
    Compare {
        #[arg(long = "config", required = true)]
        configs: Vec<PathBuf>,
        /// Output directory for configurations that do not set one
        #[arg(long, default_value = "compare-runs")]
        out_dir: PathBuf,
        /// Also write the table here
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

/// Writes to stdout; a reader that closed the pipe early is not an error.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    emit(&(serde_json::to_string_pretty(value)? + "\n"))
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(invalid("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Ingest {
            input,
            lang,
            out_dir,
            keep_punct,
            lm_k,
        } => print_json(&commands::ingest(&input, &lang, &out_dir, keep_punct, lm_k)?),
        Command::Synth {
            input,
            sentences,
            vocab,
            mode,
            seed,
            vocab_limit,
            split,
            out_dir,
        } => {
            let seed = match seed {
                Some(s) => s,
                None => env_seed()?.unwrap_or(0),
            };
            let mode = match mode {
                ModeArg::Opaque => CipherMode::Opaque,
                ModeArg::Cognate => CipherMode::Cognate,
            };
            let o = commands::SynthOptions {
                input,
                sentences,
                vocab,
                mode,
                seed,
                vocab_limit,
                split,
                out_dir,
            };
            print_json(&commands::synth(&o)?)
        }
        Command::Train {
            config,
            mut opts,
            no_ortho,
        } => {
            if no_ortho {
                opts.ortho = Some(false);
            }
            let base = match config {
                Some(p) => TrainOptions::load(&p)?,
                None => TrainOptions::default(),
            };
            let cfg = opts.over(base).resolve()?;
            print_json(&commands::train(&cfg)?)
        }
        Command::Evaluate { lexicon, gold } => print_json(&commands::evaluate(&lexicon, &gold)?),
        Command::Decode {
            run_dir,
            input,
            reference,
            output,
        } => {
            let (decoded, score) = commands::decode(&run_dir, &input, reference.as_deref())?;
            let mut text = String::new();
            for s in &decoded {
                text.push_str(&s.join(" "));
                text.push('\n');
            }
            match output {
                Some(p) => {
                    std::fs::write(&p, text)?;
                    if let Some(b) = score {
                        print_json(&serde_json::json!({ "bleu": b }))?;
                    }
                }
                None => {
                    emit(&text)?;
                    if let Some(b) = score {
                        eprintln!("{}", serde_json::json!({ "bleu": b }));
                    }
                }
            }
            Ok(())
        }
        Command::Compare {
            configs,
            out_dir,
            output,
        } => {
            let mut resolved = Vec::with_capacity(configs.len());
            for (i, path) in configs.iter().enumerate() {
                let mut opts = TrainOptions::load(path)?;
                opts.out_dir.get_or_insert_with(|| out_dir.join(format!("run{i}")));
                resolved.push(opts.resolve()?);
            }
            let table = commands::compare(&resolved)?;
            emit(&table)?;
            if let Some(p) = output {
                std::fs::write(p, &table)?;
            }
            Ok(())
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Invalid>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<decipher::Error>() {
            return match e {
                decipher::Error::Divergence { .. } => 3,
                decipher::Error::Argument(_)
                | decipher::Error::Coverage(_)
                | decipher::Error::Parse { .. }
                | decipher::Error::Oov(_)
                | decipher::Error::Decode { .. } => 2,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
