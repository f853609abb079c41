use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::{Args, ValueEnum};
use decipher::features::DEFAULT_ORTHO_THRESHOLD;
use decipher::mcmc::{Method, SamplerConfig};
use serde::{Deserialize, Serialize};

/// Input that fails validation; reported with exit status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct Invalid(pub String);

pub fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    /// Exact EM on the generative model
    Em,
    /// Log-linear model, Gibbs for both expectations
    LlGibbs,
    /// Log-linear model, IMH forced expectation and Gibbs full expectation
    LlImhGibbs,
    /// Log-linear model, contrastive divergence
    LlCd,
}

impl MethodArg {
    pub fn sampler(self) -> Option<Method> {
        match self {
            MethodArg::Em => None,
            MethodArg::LlGibbs => Some(Method::Gibbs),
            MethodArg::LlImhGibbs => Some(Method::ImhGibbs),
            MethodArg::LlCd => Some(Method::Cd),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MethodArg::Em => "em",
            MethodArg::LlGibbs => "ll-gibbs",
            MethodArg::LlImhGibbs => "ll-imh-gibbs",
            MethodArg::LlCd => "ll-cd",
        }
    }
}

/// Training options, shared by the TOML config file and the command line.
/// Every field is optional so that flags can override the file one by one.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOptions {
    /// Source (enciphered) text, one sentence per line
    #[arg(long)]
    pub source: Option<PathBuf>,
    /// Target plaintext used for the language model
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Gold lexicon (`source<TAB>target`) for accuracy
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Plaintext of the source text; enables Viterbi decoding and BLEU
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Samples per source bigram per iteration
    #[arg(long)]
    pub n_samples: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub p_backoff: Option<f64>,
    /// Rebuild the proposal every this many iterations
    #[arg(long)]
    pub qs_refresh_period: Option<usize>,
    /// Falls back to $DECIPHER_SEED, then 0
    #[arg(long)]
    pub seed: Option<u64>,
    /// Add-k smoothing of the target bigram model
    #[arg(long)]
    pub lm_k: Option<f64>,
    #[arg(skip)]
    pub ortho: Option<bool>,
    #[arg(long)]
    pub ortho_threshold: Option<f64>,
    /// Multiplicative noise on the initial EM table
    #[arg(long)]
    pub em_noise: Option<f64>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($f:ident),*) => {
        TrainOptions { $($f: $top.$f.or($base.$f)),* }
    };
}

impl TrainOptions {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
        let mut opts: TrainOptions =
            toml::from_str(&text).map_err(|e| invalid(format!("bad config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut opts.source, &mut opts.target, &mut opts.gold, &mut opts.reference, &mut opts.out_dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(opts)
    }

    /// Fields set in `self` win over those in `base`.
    pub fn over(self, base: TrainOptions) -> TrainOptions {
        overlay!(
            base, self, source, target, gold, reference, out_dir, method, n_samples, iterations, learning_rate,
            p_backoff, qs_refresh_period, seed, lm_k, ortho, ortho_threshold, em_noise
        )
    }

    pub fn resolve(self) -> Result<RunConfig> {
        let defaults = SamplerConfig::default();
        let need = |p: Option<PathBuf>, what: &str| p.ok_or_else(|| invalid(format!("missing --{what}")));
        let cfg = RunConfig {
            source: need(self.source, "source")?,
            target: need(self.target, "target")?,
            gold: self.gold,
            reference: self.reference,
            out_dir: need(self.out_dir, "out-dir")?,
            method: self.method.ok_or_else(|| invalid("missing --method"))?,
            sampler: SamplerConfig {
                n_samples: self.n_samples.unwrap_or(defaults.n_samples),
                iterations: self.iterations.unwrap_or(defaults.iterations),
                learning_rate: self.learning_rate.unwrap_or(defaults.learning_rate),
                p_backoff: self.p_backoff.unwrap_or(defaults.p_backoff),
                qs_refresh_period: self.qs_refresh_period.unwrap_or(defaults.qs_refresh_period),
                rng_seed: match self.seed {
                    Some(s) => s,
                    None => env_seed()?.unwrap_or(0),
                },
            },
            lm_k: self.lm_k.unwrap_or(0.1),
            ortho: self.ortho.unwrap_or(true),
            ortho_threshold: self.ortho_threshold.unwrap_or(DEFAULT_ORTHO_THRESHOLD),
            em_noise: self.em_noise.unwrap_or(0.1),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn env_seed() -> Result<Option<u64>> {
    match std::env::var("DECIPHER_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| invalid(format!("DECIPHER_SEED is not an unsigned integer: {s:?}"))),
        Err(_) => Ok(None),
    }
}

/// Fully resolved training run; written to `run.json` next to the outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub source: PathBuf,
    pub target: PathBuf,
    pub gold: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub method: MethodArg,
    pub sampler: SamplerConfig,
    pub lm_k: f64,
    pub ortho: bool,
    pub ortho_threshold: f64,
    pub em_noise: f64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        for p in [Some(&self.source), Some(&self.target), self.gold.as_ref(), self.reference.as_ref()]
            .into_iter()
            .flatten()
        {
            if !p.is_file() {
                return Err(invalid(format!("no such file: {}", p.display())));
            }
        }
        if !(0.0..=1.0).contains(&self.ortho_threshold) {
            return Err(invalid(format!("ortho threshold {} outside [0, 1]", self.ortho_threshold)));
        }
        if !(self.lm_k >= 0.0) {
            return Err(invalid("lm smoothing k must be non-negative"));
        }
        if !(self.em_noise >= 0.0) {
            return Err(invalid("em noise must be non-negative"));
        }
        if self.sampler.iterations == 0 {
            return Err(invalid("iterations must be >= 1"));
        }
        self.sampler.validate().map_err(|e| invalid(e.to_string()))
    }

    /// Method name plus a marker when orthographic features are off.
    pub fn label(&self) -> String {
        if self.ortho || self.method == MethodArg::Em {
            self.method.name().to_string()
        } else {
            format!("{}-no-ortho", self.method.name())
        }
    }
}
