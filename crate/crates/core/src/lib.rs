//! Typo-tolerant catalog search trained on synthetic misspellings.
//!
//! Real typo corpora are reduced to per-dataset statistics, which drive a
//! generator of one-edit misspellings of every catalog name. A character-level
//! LSTM classifier is trained on those samples and its penultimate layer is
//! used as a string embedding; queries are answered by cosine nearest
//! neighbour over the embedded catalog.

pub mod alphabet;
pub mod baseline;
pub mod catalog;
pub mod corpus;
mod error;
pub mod eval;
pub mod fixtures;
pub mod index;
pub mod keyboard;
pub mod model;
pub mod stats;
pub mod syngen;

pub use error::{Error, Result};

/// Random generator used everywhere a seeded, portable stream is needed.
pub type SampleRng = rand_chacha::ChaCha8Rng;
