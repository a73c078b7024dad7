//! Empirical typo statistics for one dataset: which edit classes occur, which
//! keys they involve and where in the string they land.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::alphabet::Alphabet;
use crate::corpus::{EditEvent, EditType};
use crate::error::{Error, Result};
use crate::keyboard::KeyboardLayout;
use crate::SampleRng;

pub const STATS_VERSION: u32 = 1;
pub const DEFAULT_BINS: usize = 10;
const SUM_TOLERANCE: f64 = 1e-9;

/// A probability vector, flagged when it is a uniform stand-in for missing
/// observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub probs: Vec<f64>,
    pub fallback: bool,
}

impl Row {
    pub fn uniform(len: usize, fallback: bool) -> Self {
        Self {
            probs: vec![1.0 / len as f64; len],
            fallback,
        }
    }

    pub fn point_mass(len: usize, at: usize) -> Self {
        let mut probs = vec![0.0; len];
        probs[at] = 1.0;
        Self {
            probs,
            fallback: false,
        }
    }

    fn from_counts(counts: &[u64]) -> Self {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Self::uniform(counts.len(), true);
        }
        Self {
            probs: counts.iter().map(|&c| c as f64 / total as f64).collect(),
            fallback: false,
        }
    }

    fn validate(&self, what: impl FnOnce() -> String) -> Result<()> {
        check_distribution(&self.probs).map_err(|reason| Error::InvalidDistribution {
            what: what(),
            reason,
        })
    }
}

fn check_distribution(probs: &[f64]) -> std::result::Result<(), String> {
    if probs.is_empty() {
        return Err("empty".into());
    }
    if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(format!("entry {p} is not a probability"));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(format!("sums to {sum}"));
    }
    Ok(())
}

/// Draws an index with the given probabilities.
pub fn sample_index(probs: &[f64], rng: &mut SampleRng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTypeDistribution {
    pub probs: [f64; 5],
}

impl ErrorTypeDistribution {
    pub fn uniform() -> Self {
        Self { probs: [0.2; 5] }
    }

    pub fn get(&self, t: EditType) -> f64 {
        self.probs[t.index()]
    }

    pub fn sample(&self, rng: &mut SampleRng) -> EditType {
        EditType::ALL[sample_index(&self.probs, rng)]
    }
}

/// Per-class key statistics. Deletion and insertion hold a marginal over the
/// alphabet; the other classes hold one row per source key.
#[derive(Debug, Clone, PartialEq)]
pub enum KeyTable {
    Marginal(Row),
    Conditional(Vec<Row>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyStats {
    pub tables: [KeyTable; 5],
}

impl KeyStats {
    pub fn table(&self, t: EditType) -> &KeyTable {
        &self.tables[t.index()]
    }

    fn replication_rows(k: usize) -> KeyTable {
        KeyTable::Conditional((0..k).map(|i| Row::point_mass(k, i)).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositionStats {
    pub bins: usize,
    pub hists: [Row; 5],
}

impl PositionStats {
    pub fn uniform(bins: usize) -> Self {
        Self {
            bins,
            hists: std::array::from_fn(|_| Row::uniform(bins, false)),
        }
    }

    pub fn hist(&self, t: EditType) -> &Row {
        &self.hists[t.index()]
    }

    pub fn bin_of(&self, r: f64) -> usize {
        ((r * self.bins as f64).floor() as usize).min(self.bins - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatsModel {
    pub dataset_id: String,
    pub alphabet: Alphabet,
    pub error_types: ErrorTypeDistribution,
    pub key_stats: KeyStats,
    pub position_stats: PositionStats,
    pub event_count: u64,
}

/// Result of a key-statistics lookup.
#[derive(Debug, Clone, PartialEq)]
pub enum KeyLookup<'a> {
    Scalar { p: f64, fallback: bool },
    Distribution { probs: &'a [f64], fallback: bool },
}

impl KeyLookup<'_> {
    pub fn is_fallback(&self) -> bool {
        match self {
            KeyLookup::Scalar { fallback, .. } | KeyLookup::Distribution { fallback, .. } => {
                *fallback
            }
        }
    }
}

fn check_bins(bins: usize) -> Result<()> {
    if bins < 2 {
        return Err(Error::InvalidDistribution {
            what: "position histogram".into(),
            reason: format!("needs at least 2 bins, got {bins}"),
        });
    }
    Ok(())
}

/// Builds the statistics of one dataset from its classified events, weighting
/// each event by its count.
pub fn build_stats(events: &[EditEvent], alphabet: &Alphabet, bins: usize) -> Result<StatsModel> {
    check_bins(bins)?;
    let first = events.first().ok_or(Error::EmptyStats)?;
    let k = alphabet.len();
    let mut type_counts = [0u64; 5];
    let mut marginal_counts = [vec![0u64; k], vec![0u64; k]];
    let mut cond_counts = [vec![vec![0u64; k]; k], vec![vec![0u64; k]; k]];
    let mut pos_counts = [(); 5].map(|_| vec![0u64; bins]);
    let positions = PositionStats::uniform(bins);

    for e in events {
        if e.source != first.source {
            return Err(Error::MixedDatasets(first.source.clone(), e.source.clone()));
        }
        let w = e.weight as u64;
        let t = e.edit_type.index();
        type_counts[t] += w;
        pos_counts[t][positions.bin_of(e.position_rel)] += w;
        let key = alphabet.try_index_of(e.key)?;
        let other = e.other_key.map(|c| alphabet.try_index_of(c)).transpose()?;
        match (e.edit_type, other) {
            (EditType::Deletion, _) => marginal_counts[0][key] += w,
            (EditType::Insertion, Some(o)) => marginal_counts[1][o] += w,
            (EditType::Substitution, Some(o)) => cond_counts[0][key][o] += w,
            (EditType::Transposition, Some(o)) => cond_counts[1][key][o] += w,
            (EditType::Replication, _) => {}
            (t, None) => {
                return Err(Error::InvalidDistribution {
                    what: format!("{t} event"),
                    reason: "missing other key".into(),
                })
            }
        }
    }

    let total: u64 = type_counts.iter().sum();
    let error_types = ErrorTypeDistribution {
        probs: type_counts.map(|c| c as f64 / total as f64),
    };
    let [del, ins] = marginal_counts;
    let [sub, tra] = cond_counts;
    let conditional = |rows: Vec<Vec<u64>>| {
        KeyTable::Conditional(rows.iter().map(|r| Row::from_counts(r)).collect())
    };
    let key_stats = KeyStats {
        tables: [
            KeyTable::Marginal(Row::from_counts(&del)),
            KeyTable::Marginal(Row::from_counts(&ins)),
            KeyStats::replication_rows(k),
            conditional(sub),
            conditional(tra),
        ],
    };
    let position_stats = PositionStats {
        bins,
        hists: pos_counts.map(|c| Row::from_counts(&c)),
    };
    Ok(StatsModel {
        dataset_id: first.source.clone(),
        alphabet: alphabet.clone(),
        error_types,
        key_stats,
        position_stats,
        event_count: total,
    })
}

/// Every class, key and position equally likely.
pub fn uniform_stats(alphabet: &Alphabet, bins: usize) -> Result<StatsModel> {
    check_bins(bins)?;
    let k = alphabet.len();
    let rows = || KeyTable::Conditional((0..k).map(|_| Row::uniform(k, false)).collect());
    Ok(StatsModel {
        dataset_id: "uniform".into(),
        alphabet: alphabet.clone(),
        error_types: ErrorTypeDistribution::uniform(),
        key_stats: KeyStats {
            tables: [
                KeyTable::Marginal(Row::uniform(k, false)),
                KeyTable::Marginal(Row::uniform(k, false)),
                KeyStats::replication_rows(k),
                rows(),
                rows(),
            ],
        },
        position_stats: PositionStats::uniform(bins),
        event_count: 0,
    })
}

/// Uniform statistics except that a key is only ever substituted by one of
/// its physical neighbours. Keys without neighbours keep a flagged uniform row.
pub fn qwerty_stats(
    alphabet: &Alphabet,
    layout: &KeyboardLayout,
    bins: usize,
) -> Result<StatsModel> {
    let mut stats = uniform_stats(alphabet, bins)?;
    stats.dataset_id = "qwerty".into();
    let k = alphabet.len();
    let rows = (0..k)
        .map(|i| {
            let nbrs: Vec<usize> = layout
                .neighbors(alphabet.char_at(i))
                .into_iter()
                .filter_map(|c| alphabet.index_of(c))
                .collect();
            if nbrs.is_empty() {
                return Row::uniform(k, true);
            }
            let mut probs = vec![0.0; k];
            for &n in &nbrs {
                probs[n] = 1.0 / nbrs.len() as f64;
            }
            Row {
                probs,
                fallback: false,
            }
        })
        .collect();
    stats.key_stats.tables[EditType::Substitution.index()] = KeyTable::Conditional(rows);
    Ok(stats)
}

impl StatsModel {
    pub fn lookup_key_dist(&self, edit_type: EditType, key: char) -> Result<KeyLookup<'_>> {
        let idx = self.alphabet.try_index_of(key)?;
        Ok(match self.key_stats.table(edit_type) {
            KeyTable::Marginal(row) => KeyLookup::Scalar {
                p: row.probs[idx],
                fallback: row.fallback,
            },
            KeyTable::Conditional(rows) => KeyLookup::Distribution {
                probs: &rows[idx].probs,
                fallback: rows[idx].fallback,
            },
        })
    }

    /// The full distribution used to draw a new character: the marginal for
    /// deletion/insertion, otherwise the row of `key`.
    pub fn key_row(&self, edit_type: EditType, key: char) -> Result<&[f64]> {
        let idx = self.alphabet.try_index_of(key)?;
        Ok(match self.key_stats.table(edit_type) {
            KeyTable::Marginal(row) => &row.probs,
            KeyTable::Conditional(rows) => &rows[idx].probs,
        })
    }

    /// Draws a zero-based position in a string of `string_length` characters
    /// from the class's relative-position histogram.
    pub fn sample_position(
        &self,
        edit_type: EditType,
        string_length: usize,
        rng: &mut SampleRng,
    ) -> usize {
        let hist = self.position_stats.hist(edit_type);
        let bin = sample_index(&hist.probs, rng);
        let width = 1.0 / self.position_stats.bins as f64;
        let r = (bin as f64 + rng.gen::<f64>()) * width;
        let max = string_length.saturating_sub(1);
        ((r * max as f64).round() as usize).min(max)
    }

    /// Checks every distribution the model holds.
    pub fn validate(&self) -> Result<()> {
        check_distribution(&self.error_types.probs).map_err(|reason| {
            Error::InvalidDistribution {
                what: "error types".into(),
                reason,
            }
        })?;
        check_bins(self.position_stats.bins)?;
        let k = self.alphabet.len();
        for t in EditType::ALL {
            let hist = self.position_stats.hist(t);
            if hist.probs.len() != self.position_stats.bins {
                return Err(Error::InvalidDistribution {
                    what: format!("{t} positions"),
                    reason: "wrong bin count".into(),
                });
            }
            hist.validate(|| format!("{t} positions"))?;
            match self.key_stats.table(t) {
                KeyTable::Marginal(row) => {
                    if row.probs.len() != k {
                        return Err(Error::InvalidDistribution {
                            what: format!("{t} keys"),
                            reason: "wrong width".into(),
                        });
                    }
                    row.validate(|| format!("{t} keys"))?
                }
                KeyTable::Conditional(rows) => {
                    if rows.len() != k || rows.iter().any(|r| r.probs.len() != k) {
                        return Err(Error::InvalidDistribution {
                            what: format!("{t} keys"),
                            reason: "wrong shape".into(),
                        });
                    }
                    for (i, row) in rows.iter().enumerate() {
                        row.validate(|| format!("{t} row {:?}", self.alphabet.char_at(i)))?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn save(&self) -> Vec<u8> {
        let mut bytes =
            serde_json::to_vec_pretty(&StatsFile::from_model(self)).expect("stats serialize");
        bytes.push(b'\n');
        bytes
    }

    pub fn load(bytes: &[u8]) -> Result<Self> {
        let file: StatsFile =
            serde_json::from_slice(bytes).map_err(|e| Error::StatsFormat(e.to_string()))?;
        file.into_model()
    }

    /// SHA-256 of the saved form.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.save()))
    }
}

// On-disk layout. Fallback rows and Replication rows are implied and left out;
// zero entries are omitted.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StatsFile {
    version: u32,
    dataset_id: String,
    alphabet: String,
    bins: usize,
    event_count: u64,
    #[serde(default)]
    error_types: BTreeMap<EditType, f64>,
    #[serde(default)]
    key_stats: KeyStatsFile,
    #[serde(default)]
    position_stats: BTreeMap<EditType, Vec<f64>>,
}

#[derive(Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeyStatsFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    deletion: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    insertion: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    substitution: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(default)]
    transposition: BTreeMap<String, BTreeMap<String, f64>>,
}

fn sparse(alphabet: &Alphabet, probs: &[f64]) -> BTreeMap<String, f64> {
    probs
        .iter()
        .enumerate()
        .filter(|(_, p)| **p != 0.0)
        .map(|(i, p)| (alphabet.char_at(i).to_string(), *p))
        .collect()
}

fn dense(alphabet: &Alphabet, map: &BTreeMap<String, f64>, what: &str) -> Result<Row> {
    let mut probs = vec![0.0; alphabet.len()];
    for (key, p) in map {
        let mut chars = key.chars();
        let (Some(c), None) = (chars.next(), chars.next()) else {
            return Err(Error::StatsFormat(format!(
                "{what}: key {key:?} is not one character"
            )));
        };
        probs[alphabet.try_index_of(c)?] = *p;
    }
    let row = Row {
        probs,
        fallback: false,
    };
    row.validate(|| what.to_string())?;
    Ok(row)
}

impl StatsFile {
    fn from_model(m: &StatsModel) -> Self {
        let a = &m.alphabet;
        let marginal = |t: EditType| match m.key_stats.table(t) {
            KeyTable::Marginal(row) if !row.fallback => Some(sparse(a, &row.probs)),
            _ => None,
        };
        let conditional = |t: EditType| match m.key_stats.table(t) {
            KeyTable::Conditional(rows) => rows
                .iter()
                .enumerate()
                .filter(|(_, r)| !r.fallback)
                .map(|(i, r)| (a.char_at(i).to_string(), sparse(a, &r.probs)))
                .collect(),
            KeyTable::Marginal(_) => BTreeMap::new(),
        };
        StatsFile {
            version: STATS_VERSION,
            dataset_id: m.dataset_id.clone(),
            alphabet: a.clone().into(),
            bins: m.position_stats.bins,
            event_count: m.event_count,
            error_types: EditType::ALL
                .iter()
                .map(|&t| (t, m.error_types.get(t)))
                .collect(),
            key_stats: KeyStatsFile {
                deletion: marginal(EditType::Deletion),
                insertion: marginal(EditType::Insertion),
                substitution: conditional(EditType::Substitution),
                transposition: conditional(EditType::Transposition),
            },
            position_stats: EditType::ALL
                .iter()
                .filter(|&&t| !m.position_stats.hist(t).fallback)
                .map(|&t| (t, m.position_stats.hist(t).probs.clone()))
                .collect(),
        }
    }

    fn into_model(self) -> Result<StatsModel> {
        if self.version != STATS_VERSION {
            return Err(Error::Version {
                kind: "stats",
                found: self.version,
                expected: STATS_VERSION,
            });
        }
        let alphabet = Alphabet::new(&self.alphabet)?;
        check_bins(self.bins)?;
        let k = alphabet.len();
        let mut probs = [0.0; 5];
        for (t, p) in &self.error_types {
            probs[t.index()] = *p;
        }
        let marginal = |m: &Option<BTreeMap<String, f64>>, what: &str| -> Result<KeyTable> {
            Ok(KeyTable::Marginal(match m {
                Some(map) => dense(&alphabet, map, what)?,
                None => Row::uniform(k, true),
            }))
        };
        let conditional =
            |m: &BTreeMap<String, BTreeMap<String, f64>>, what: &str| -> Result<KeyTable> {
                let mut rows: Vec<Row> = (0..k).map(|_| Row::uniform(k, true)).collect();
                for (key, row) in m {
                    let mut chars = key.chars();
                    let (Some(c), None) = (chars.next(), chars.next()) else {
                        return Err(Error::StatsFormat(format!(
                            "{what}: key {key:?} is not one character"
                        )));
                    };
                    rows[alphabet.try_index_of(c)?] =
                        dense(&alphabet, row, &format!("{what} row {key:?}"))?;
                }
                Ok(KeyTable::Conditional(rows))
            };
        let key_stats = KeyStats {
            tables: [
                marginal(&self.key_stats.deletion, "deletion keys")?,
                marginal(&self.key_stats.insertion, "insertion keys")?,
                KeyStats::replication_rows(k),
                conditional(&self.key_stats.substitution, "substitution")?,
                conditional(&self.key_stats.transposition, "transposition")?,
            ],
        };
        let mut hists: [Row; 5] = std::array::from_fn(|_| Row::uniform(self.bins, true));
        for (t, h) in self.position_stats {
            hists[t.index()] = Row {
                probs: h,
                fallback: false,
            };
        }
        let model = StatsModel {
            dataset_id: self.dataset_id,
            alphabet,
            error_types: ErrorTypeDistribution { probs },
            key_stats,
            position_stats: PositionStats {
                bins: self.bins,
                hists,
            },
            event_count: self.event_count,
        };
        model.validate()?;
        Ok(model)
    }
}

/// Weighted list of datasets to mix.
#[derive(Debug, Clone)]
pub struct FusionSpec {
    pub components: Vec<(Arc<StatsModel>, f64)>,
}

impl FusionSpec {
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.components.iter().map(|(_, w)| w).sum();
        let bad = self.components.is_empty()
            || self
                .components
                .iter()
                .any(|(_, w)| !w.is_finite() || *w < 0.0)
            || (sum - 1.0).abs() > SUM_TOLERANCE;
        if bad {
            return Err(Error::FusionWeights { sum });
        }
        Ok(())
    }
}

/// Supplies the statistics for each synthetic sample.
pub trait StatsSource: Sync + Send {
    fn draw(&self, rng: &mut SampleRng) -> &StatsModel;

    /// Identifies the statistics for provenance headers.
    fn digest(&self) -> String;
}

impl StatsSource for StatsModel {
    fn draw(&self, _rng: &mut SampleRng) -> &StatsModel {
        self
    }

    fn digest(&self) -> String {
        StatsModel::digest(self)
    }
}

impl StatsSource for Arc<StatsModel> {
    fn draw(&self, _rng: &mut SampleRng) -> &StatsModel {
        self
    }

    fn digest(&self) -> String {
        StatsModel::digest(self)
    }
}

/// Picks a dataset per draw with probability equal to its weight.
/// Zero-weight components are dropped; a single remaining component is
/// returned without consuming randomness, so a one-hot mixture generates
/// exactly what that dataset alone would.
#[derive(Debug, Clone)]
pub struct FusionSelector {
    models: Vec<Arc<StatsModel>>,
    weights: Vec<f64>,
}

pub fn fuse(spec: &FusionSpec) -> Result<FusionSelector> {
    spec.validate()?;
    let (models, weights) = spec
        .components
        .iter()
        .filter(|(_, w)| *w > 0.0)
        .map(|(m, w)| (m.clone(), *w))
        .unzip();
    Ok(FusionSelector { models, weights })
}

impl FusionSelector {
    pub fn select_index(&self, rng: &mut SampleRng) -> usize {
        if self.models.len() == 1 {
            0
        } else {
            sample_index(&self.weights, rng)
        }
    }

    pub fn models(&self) -> &[Arc<StatsModel>] {
        &self.models
    }
}

impl StatsSource for FusionSelector {
    fn draw(&self, rng: &mut SampleRng) -> &StatsModel {
        &self.models[self.select_index(rng)]
    }

    fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (m, w) in self.models.iter().zip(&self.weights) {
            h.update(m.digest().as_bytes());
            h.update(w.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{classify_corpus, TypoPair};
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn event(t: EditType, key: char, other: Option<char>, r: f64) -> EditEvent {
        EditEvent {
            edit_type: t,
            key,
            other_key: other,
            position_index: 0,
            position_rel: r,
            source: "d".into(),
            weight: 1,
        }
    }

    #[test]
    fn deletion_marginal_is_weighted_frequency() {
        let a = Alphabet::default();
        let events: Vec<_> = "aaeo"
            .chars()
            .map(|c| event(EditType::Deletion, c, None, 0.5))
            .collect();
        let s = build_stats(&events, &a, 10).unwrap();
        let KeyLookup::Scalar { p, fallback } = s.lookup_key_dist(EditType::Deletion, 'a').unwrap()
        else {
            panic!()
        };
        assert_eq!((p, fallback), (0.5, false));
        assert!(
            matches!(s.lookup_key_dist(EditType::Deletion, 'e').unwrap(), KeyLookup::Scalar { p, .. } if p == 0.25)
        );
        assert!(
            matches!(s.lookup_key_dist(EditType::Deletion, 'o').unwrap(), KeyLookup::Scalar { p, .. } if p == 0.25)
        );
        // single type: point mass
        assert_eq!(s.error_types.probs, [1.0, 0.0, 0.0, 0.0, 0.0]);
        // unseen types fall back, flagged
        assert!(s
            .lookup_key_dist(EditType::Transposition, 'q')
            .unwrap()
            .is_fallback());
        assert!(s.position_stats.hist(EditType::Insertion).fallback);
        s.validate().unwrap();
    }

    #[test]
    fn weights_count_multiply() {
        let a = Alphabet::default();
        let mut e = event(EditType::Substitution, 'o', Some('i'), 0.0);
        e.weight = 3;
        let events = vec![e, event(EditType::Substitution, 'o', Some('p'), 1.0)];
        let s = build_stats(&events, &a, 10).unwrap();
        let KeyLookup::Distribution { probs, .. } =
            s.lookup_key_dist(EditType::Substitution, 'o').unwrap()
        else {
            panic!()
        };
        assert_eq!(probs[a.index_of('i').unwrap()], 0.75);
        assert_eq!(s.position_stats.hist(EditType::Substitution).probs[0], 0.75);
        assert_eq!(s.position_stats.hist(EditType::Substitution).probs[9], 0.25);
    }

    #[test]
    fn empty_and_mixed_inputs_fail() {
        let a = Alphabet::default();
        assert!(matches!(build_stats(&[], &a, 10), Err(Error::EmptyStats)));
        let mut e2 = event(EditType::Deletion, 'a', None, 0.0);
        e2.source = "other".into();
        let events = vec![event(EditType::Deletion, 'a', None, 0.0), e2];
        assert!(matches!(
            build_stats(&events, &a, 10),
            Err(Error::MixedDatasets(..))
        ));
        assert!(build_stats(&events[..1], &a, 1).is_err());
    }

    #[test]
    fn uniform_values() {
        let a = Alphabet::default();
        let s = uniform_stats(&a, 10).unwrap();
        assert!(s.error_types.probs.iter().all(|&p| p == 0.2));
        let KeyLookup::Distribution { probs, fallback } =
            s.lookup_key_dist(EditType::Substitution, 'o').unwrap()
        else {
            panic!()
        };
        assert!(!fallback);
        assert!(probs.iter().all(|&p| p == 1.0 / 37.0));
        assert_eq!(
            s.lookup_key_dist(EditType::Deletion, 'a').unwrap(),
            KeyLookup::Scalar {
                p: 1.0 / 37.0,
                fallback: false
            }
        );
        assert!(s
            .position_stats
            .hist(EditType::Deletion)
            .probs
            .iter()
            .all(|&p| p == 0.1));
        s.validate().unwrap();
    }

    #[test]
    fn qwerty_substitution_row_for_o() {
        let a = Alphabet::default();
        let s = qwerty_stats(&a, &KeyboardLayout::qwerty(), 10).unwrap();
        let KeyLookup::Distribution { probs, .. } =
            s.lookup_key_dist(EditType::Substitution, 'o').unwrap()
        else {
            panic!()
        };
        for (i, &p) in probs.iter().enumerate() {
            let c = a.char_at(i);
            let expected = if "ipkl90".contains(c) { 1.0 / 6.0 } else { 0.0 };
            assert_eq!(p, expected, "{c}");
        }
        assert!(s
            .lookup_key_dist(EditType::Substitution, ' ')
            .unwrap()
            .is_fallback());
        s.validate().unwrap();
    }

    #[test]
    fn lookup_rejects_foreign_keys() {
        let s = uniform_stats(&Alphabet::default(), 10).unwrap();
        assert!(matches!(
            s.lookup_key_dist(EditType::Deletion, '#'),
            Err(Error::OutsideAlphabet('#'))
        ));
    }

    #[test]
    fn single_position_string() {
        let s = uniform_stats(&Alphabet::default(), 10).unwrap();
        let mut rng = SampleRng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(s.sample_position(EditType::Deletion, 1, &mut rng), 0);
        }
    }

    #[test]
    fn last_bin_point_mass_maps_to_the_end() {
        let mut s = uniform_stats(&Alphabet::default(), 10).unwrap();
        s.position_stats.hists[0] = Row::point_mass(10, 9);
        let mut rng = SampleRng::seed_from_u64(2);
        let mut hits = [0usize; 10];
        for _ in 0..2000 {
            hits[s.sample_position(EditType::Deletion, 10, &mut rng)] += 1;
        }
        // r in [0.9, 1) maps to round(9r) in {8, 9}; 9 covers r >= 17/18, i.e. 5/9 of the bin
        assert_eq!(hits[..8].iter().sum::<usize>(), 0);
        let frac9 = hits[9] as f64 / 2000.0;
        assert!((frac9 - 5.0 / 9.0).abs() < 0.05, "{frac9}");
    }

    #[test]
    fn save_load_round_trip_and_errors() {
        let a = Alphabet::default();
        let pairs = vec![
            TypoPair::new("finlly", "finally"),
            TypoPair::new("fianlly", "finally"),
            TypoPair::new("finelly", "finally"),
        ];
        let (events, _) = classify_corpus(&pairs, "d");
        let s = build_stats(&events, &a, 10).unwrap();
        let bytes = s.save();
        assert_eq!(StatsModel::load(&bytes).unwrap(), s);
        assert!(StatsModel::load(&bytes[..bytes.len() / 2]).is_err());

        let text = String::from_utf8(bytes)
            .unwrap()
            .replace("\"version\": 1", "\"version\": 9");
        assert!(matches!(
            StatsModel::load(text.as_bytes()),
            Err(Error::Version { found: 9, .. })
        ));
    }

    #[test]
    fn minimal_hand_written_file_loads_with_fallbacks() {
        let text = r#"{
            "version": 1, "dataset_id": "hand", "alphabet": "abcdefghijklmnopqrstuvwxyz0123456789 ",
            "bins": 4, "event_count": 2,
            "error_types": {"deletion": 1.0},
            "key_stats": {"deletion": {"a": 0.5, "b": 0.5}},
            "position_stats": {"deletion": [0.0, 0.0, 0.5, 0.5]}
        }"#;
        let s = StatsModel::load(text.as_bytes()).unwrap();
        assert_eq!(s.error_types.probs, [1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(!s
            .lookup_key_dist(EditType::Deletion, 'a')
            .unwrap()
            .is_fallback());
        assert!(s
            .lookup_key_dist(EditType::Insertion, 'a')
            .unwrap()
            .is_fallback());
        assert!(s
            .lookup_key_dist(EditType::Substitution, 'a')
            .unwrap()
            .is_fallback());
        assert!(s.position_stats.hist(EditType::Transposition).fallback);
        s.validate().unwrap();
    }

    #[test]
    fn fusion_validation_and_degenerate_selector() {
        let a = Alphabet::default();
        let u = Arc::new(uniform_stats(&a, 10).unwrap());
        let q = Arc::new(qwerty_stats(&a, &KeyboardLayout::qwerty(), 10).unwrap());
        let bad = FusionSpec {
            components: vec![(u.clone(), 0.5), (q.clone(), 0.6)],
        };
        assert!(matches!(fuse(&bad), Err(Error::FusionWeights { .. })));
        let neg = FusionSpec {
            components: vec![(u.clone(), 1.5), (q.clone(), -0.5)],
        };
        assert!(fuse(&neg).is_err());

        let one = fuse(&FusionSpec {
            components: vec![(u.clone(), 0.0), (q.clone(), 1.0)],
        })
        .unwrap();
        let mut rng = SampleRng::seed_from_u64(3);
        let before = rng.clone();
        for _ in 0..10 {
            assert_eq!(one.draw(&mut rng).dataset_id, "qwerty");
        }
        assert_eq!(rng, before, "single component must not consume randomness");
    }

    #[test]
    fn fusion_frequencies_follow_weights() {
        let a = Alphabet::default();
        let u = Arc::new(uniform_stats(&a, 10).unwrap());
        let q = Arc::new(qwerty_stats(&a, &KeyboardLayout::qwerty(), 10).unwrap());
        let sel = fuse(&FusionSpec {
            components: vec![(u, 0.5), (q, 0.5)],
        })
        .unwrap();
        let mut rng = SampleRng::seed_from_u64(11);
        let hits = (0..10_000)
            .filter(|_| sel.select_index(&mut rng) == 0)
            .count();
        assert!((4850..=5150).contains(&hits), "{hits}");
    }

    fn arb_event() -> impl Strategy<Value = EditEvent> {
        let keys: Vec<char> = Alphabet::default().chars().to_vec();
        (0usize..5, 0usize..37, 0usize..37, 0.0f64..=1.0, 1u32..5).prop_map(
            move |(t, k, o, r, w)| {
                let t = EditType::ALL[t];
                let other = match t {
                    EditType::Deletion => None,
                    EditType::Replication => Some(keys[k]),
                    _ => Some(keys[o]),
                };
                EditEvent {
                    edit_type: t,
                    key: keys[k],
                    other_key: other,
                    position_index: 0,
                    position_rel: r,
                    source: "p".into(),
                    weight: w,
                }
            },
        )
    }

    proptest! {
        #[test]
        fn built_stats_are_normalized_and_order_free(
            events in proptest::collection::vec(arb_event(), 1..60),
            bins in 2usize..16,
        ) {
            let a = Alphabet::default();
            let s = build_stats(&events, &a, bins).unwrap();
            s.validate().unwrap();
            let loaded = StatsModel::load(&s.save()).unwrap();
            loaded.validate().unwrap();
            prop_assert_eq!(&loaded, &s);
            let mut rev = events.clone();
            rev.reverse();
            prop_assert_eq!(&build_stats(&rev, &a, bins).unwrap(), &s);
            for t in EditType::ALL {
                for &c in a.chars() {
                    match s.lookup_key_dist(t, c).unwrap() {
                        KeyLookup::Scalar { p, .. } => prop_assert!(p >= 0.0),
                        KeyLookup::Distribution { probs, .. } => prop_assert!(probs.iter().all(|p| *p >= 0.0)),
                    }
                }
            }
        }
    }
}
