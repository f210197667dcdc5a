//! Pre-trained word embeddings for small unidirectional LSTM language models.
//!
//! The crate covers the full pipeline: corpus ingestion ([`corpus`]), dense
//! binary64 kernels with exact BPTT gradients ([`numcore`]), embedding tables
//! and their text format ([`embed`]), three embedding sources ([`word2vec`],
//! [`bilm`], [`domaincls`]), LSA + spherical k-means domain labeling
//! ([`labeler`]), and the target LSTM LM with perplexity evaluation, a word
//! rank probe and a multi-row experiment suite ([`lm`]).
//!
//! Runnable walkthroughs live in `examples/`; the `revlm` binary wraps the
//! same operations as subcommands ([`cli`]).

pub mod bilm;
pub mod cli;
pub mod corpus;
pub mod domaincls;
pub mod embed;
mod error;
pub mod labeler;
pub mod lm;
pub mod numcore;
pub mod synth;
pub mod train;
pub mod word2vec;

pub use error::{Error, Result};

/// Seed used whenever none is given.
pub const DEFAULT_SEED: u64 = 42;
