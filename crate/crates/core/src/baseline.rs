//! Dictionary spellchecker baseline: candidates within a bounded edit
//! distance, nearest tier first, then the most frequent word.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize};

use crate::alphabet::Alphabet;
use crate::catalog::Catalog;
use crate::error::{Error, Result};

/// Unit-cost edit distance (insert, delete, substitute) over characters.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit distance if it is at most `max`, computed with early exit.
pub fn levenshtein_within(a: &[char], b: &[char], max: usize) -> Option<usize> {
    if a.len().abs_diff(b.len()) > max {
        return None;
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        let mut row_min = cur[0];
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
            row_min = row_min.min(cur[j + 1]);
        }
        if row_min > max {
            return None;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let d = prev[b.len()];
    (d <= max).then_some(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DictionarySource {
    DefaultEnglish,
    CatalogEnhanced,
}

impl fmt::Display for DictionarySource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::DefaultEnglish => "default-english",
            Self::CatalogEnhanced => "catalog-enhanced",
        })
    }
}

#[derive(Debug, Clone)]
pub struct FrequencyDictionary {
    pub source: DictionarySource,
    /// identifies the underlying word list in reports
    pub label: String,
    freq: HashMap<String, u64>,
    /// entries as characters, in lexicographic order
    entries: Vec<(String, Vec<char>)>,
}

use crate::fixtures::ENGLISH_WORDS as BUNDLED_ENGLISH;

impl FrequencyDictionary {
    pub fn from_counts<I: IntoIterator<Item = (String, u64)>>(
        counts: I,
        source: DictionarySource,
        label: impl Into<String>,
        alphabet: &Alphabet,
    ) -> Result<Self> {
        let mut freq: HashMap<String, u64> = HashMap::new();
        for (w, f) in counts {
            let w = alphabet.canonicalize(&w);
            if w.is_empty() || f == 0 {
                continue;
            }
            let slot = freq.entry(w).or_insert(0);
            *slot = (*slot).max(f);
        }
        if freq.is_empty() {
            return Err(Error::EmptyDictionary);
        }
        let mut entries: Vec<(String, Vec<char>)> = freq
            .keys()
            .map(|w| (w.clone(), w.chars().collect()))
            .collect();
        entries.sort();
        Ok(Self {
            source,
            label: label.into(),
            freq,
            entries,
        })
    }

    /// `word<TAB>frequency` per line; `#` comments and blank lines skipped.
    pub fn read<R: Read>(source: R, label: impl Into<String>, alphabet: &Alphabet) -> Result<Self> {
        let mut counts = Vec::new();
        for (n, line) in BufReader::new(source).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, f) = line
                .split_once('\t')
                .ok_or_else(|| Error::DictionaryFormat {
                    line: n + 1,
                    reason: "expected word<TAB>frequency".into(),
                })?;
            let f: u64 = f.trim().parse().map_err(|_| Error::DictionaryFormat {
                line: n + 1,
                reason: format!("bad frequency {f:?}"),
            })?;
            if f == 0 {
                return Err(Error::DictionaryFormat {
                    line: n + 1,
                    reason: "frequency must be at least 1".into(),
                });
            }
            counts.push((word.to_string(), f));
        }
        Self::from_counts(counts, DictionarySource::DefaultEnglish, label, alphabet)
    }

    /// The bundled English frequency list (6,000 common words).
    pub fn bundled_english(alphabet: &Alphabet) -> Result<Self> {
        Self::read(BUNDLED_ENGLISH.as_bytes(), "wordfreq-en-top6000", alphabet)
    }

    /// Adds every catalog token and every full catalog name. Added entries
    /// get the largest frequency already present, so product vocabulary wins
    /// ties against ordinary words in the same distance tier.
    pub fn enhance_with_catalog(&self, catalog: &Catalog, alphabet: &Alphabet) -> Result<Self> {
        let top = self.freq.values().copied().max().unwrap_or(1);
        let mut counts: Vec<(String, u64)> =
            self.freq.iter().map(|(w, f)| (w.clone(), *f)).collect();
        for name in catalog.names() {
            counts.push((name.clone(), top));
            counts.extend(name.split(' ').map(|t| (t.to_string(), top)));
        }
        Self::from_counts(
            counts,
            DictionarySource::CatalogEnhanced,
            format!("{}+catalog", self.label),
            alphabet,
        )
    }

    pub fn len(&self) -> usize {
        self.freq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freq.is_empty()
    }

    pub fn frequency(&self, word: &str) -> Option<u64> {
        self.freq.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.freq.contains_key(word)
    }

    fn best_within(&self, word: &str, max_edit: usize, multi_word: bool) -> Option<&str> {
        let chars: Vec<char> = word.chars().collect();
        // best[d] = (frequency, word) for distance d
        let mut best: Vec<Option<(u64, &str)>> = vec![None; max_edit + 1];
        for (w, wc) in &self.entries {
            if w.contains(' ') != multi_word {
                continue;
            }
            let Some(d) = levenshtein_within(&chars, wc, max_edit) else {
                continue;
            };
            let f = self.freq[w];
            // entries are visited in lexicographic order, so `>` keeps the
            // smallest word among equal frequencies
            if best[d].is_none_or(|(bf, _)| f > bf) {
                best[d] = Some((f, w));
            }
        }
        best.into_iter().skip(1).flatten().next().map(|(_, w)| w)
    }
}

/// Corrects one canonical token: itself if known, else the most frequent
/// word of the nearest non-empty distance tier up to `max_edit`.
pub fn baseline_correct(word: &str, dict: &FrequencyDictionary, max_edit: usize) -> Option<String> {
    if dict.contains(word) {
        return Some(word.to_string());
    }
    dict.best_within(word, max_edit, word.contains(' '))
        .map(str::to_string)
}

/// Corrects a canonical query: a whole-query match against multi-word
/// entries first, otherwise token by token (unknown tokens kept as typed).
pub fn correct_query(query: &str, dict: &FrequencyDictionary, max_edit: usize) -> String {
    if dict.contains(query) {
        return query.to_string();
    }
    // also covers a dropped space merging two tokens
    if let Some(hit) = dict.best_within(query, max_edit, true) {
        return hit.to_string();
    }
    query
        .split(' ')
        .map(|t| baseline_correct(t, dict, max_edit).unwrap_or_else(|| t.to_string()))
        .collect::<Vec<_>>()
        .join(" ")
}
