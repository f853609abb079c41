//! Decipherment of a source-language text against an independent
//! target-language corpus.
//!
//! The crate learns word-level translations from two monolingual corpora by
//! treating the source text as a word-substitution cipher of target-language
//! plaintext. Two model families are provided:
//!
//! * the generative baseline trained with exact EM ([`em`]), and
//! * a latent-variable log-linear model with translation and orthographic
//!   features ([`loglinear`]), trained with sampled gradients ([`mcmc`]).
//!
//! [`cipher`] generates synthetic instances with known answers and [`eval`]
//! scores lexicons and decoded text.

pub mod cipher;
pub mod corpus;
pub mod em;
pub mod error;
pub mod eval;
pub mod features;
pub mod loglinear;
pub mod mcmc;
pub mod ngram_lm;

pub use error::{Error, Result};
