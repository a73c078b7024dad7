//! Small bundled data set: a 1,000-entry product catalog, three typo corpora
//! in the supported formats, and a held-out corpus for validation statistics.

use std::sync::Arc;

use crate::alphabet::Alphabet;
use crate::catalog::Catalog;
use crate::corpus::{classify_corpus, parse_corpus, CorpusFormat};
use crate::error::Result;
use crate::eval::{Experiment, ValidationSet};
use crate::model::ModelConfig;
use crate::stats::{build_stats, StatsModel, DEFAULT_BINS};

pub const CATALOG: &str = include_str!("../data/catalog.txt");
pub const GITHUB_JSONL: &str = include_str!("../data/github_typos.jsonl");
pub const TWITTER_TSV: &str = include_str!("../data/twitter_typos.tsv");
pub const SEARCH_LOG_TSV: &str = include_str!("../data/search_log_typos.tsv");
pub const HOLDOUT_TSV: &str = include_str!("../data/holdout_typos.tsv");
pub const ENGLISH_WORDS: &str = include_str!("../data/english_words.tsv");

/// Identifier of the held-out corpus; never used for training.
pub const HOLDOUT_ID: &str = "holdout";

/// `(dataset id, format, contents)` of the training corpora.
pub const CORPORA: [(&str, CorpusFormat, &str); 3] = [
    ("github", CorpusFormat::GithubJsonl, GITHUB_JSONL),
    ("twitter", CorpusFormat::TwitterTsv, TWITTER_TSV),
    ("search-log", CorpusFormat::Tsv, SEARCH_LOG_TSV),
];

pub fn catalog(alphabet: &Alphabet) -> Result<Catalog> {
    Catalog::read(CATALOG.as_bytes(), alphabet)
}

/// The first `n` catalog entries.
pub fn desk_catalog(alphabet: &Alphabet, n: usize) -> Result<Catalog> {
    Ok(catalog(alphabet)?.truncate(n))
}

pub fn stats_from(
    id: &str,
    format: CorpusFormat,
    contents: &str,
    alphabet: &Alphabet,
    bins: usize,
) -> Result<StatsModel> {
    let parsed = parse_corpus(contents.as_bytes(), format, alphabet)?;
    let (events, _) = classify_corpus(&parsed.pairs, id);
    build_stats(&events, alphabet, bins)
}

/// Statistics of every training corpus, in [`CORPORA`] order.
pub fn corpus_stats(alphabet: &Alphabet, bins: usize) -> Result<Vec<StatsModel>> {
    CORPORA
        .iter()
        .map(|(id, format, text)| stats_from(id, *format, text, alphabet, bins))
        .collect()
}

pub fn holdout_stats(alphabet: &Alphabet, bins: usize) -> Result<StatsModel> {
    stats_from(HOLDOUT_ID, CorpusFormat::Tsv, HOLDOUT_TSV, alphabet, bins)
}

/// Seed of the held-out validation draw; training seeds must differ.
pub const VALIDATION_SEED: u64 = 1_000_003;
pub const VALIDATION_PER_CLASS: usize = 5;
/// Edits per held-out query. Single-edit queries over a few hundred classes
/// are solved almost perfectly by every strategy, which hides differences.
pub const VALIDATION_EDITS: usize = 2;

/// The first `catalog_size` bundled names, the three training corpora and a
/// validation set drawn from the held-out corpus.
pub fn desk_experiment(catalog_size: usize, model: ModelConfig) -> Result<Experiment> {
    let alphabet = Alphabet::default();
    let catalog = desk_catalog(&alphabet, catalog_size)?;
    let datasets = corpus_stats(&alphabet, DEFAULT_BINS)?
        .into_iter()
        .map(|s| (s.dataset_id.clone(), Arc::new(s)))
        .collect();
    let holdout = holdout_stats(&alphabet, DEFAULT_BINS)?;
    let validation = ValidationSet::held_out(
        &catalog,
        &holdout,
        VALIDATION_PER_CLASS,
        VALIDATION_EDITS,
        VALIDATION_SEED,
    )?;
    Ok(Experiment {
        catalog,
        alphabet,
        datasets,
        validation,
        model,
        bins: DEFAULT_BINS,
    })
}
