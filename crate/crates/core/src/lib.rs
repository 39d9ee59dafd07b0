//! Reference-free translation quality estimation by round-trip translation.
//!
//! The crate scores how close an input sentence and its round trip are, using
//! surface-level metrics ([`lexical`]) and embedding-based metrics
//! ([`semantic`]), and meta-evaluates those scores against human judgments
//! ([`meta_eval`]). Everything here is pure and I/O-free except [`corpus_io`],
//! which reads the evaluation data files.

pub mod corpus_io;
pub mod lexical;
pub mod meta_eval;
pub mod semantic;
pub mod textnorm;

pub use textnorm::{char_stream, split_cjk_chars, tokenize, Scheme, TokenSequence};
