//! Synthetic misspellings: draws an edit class, a position and the keys
//! involved from typo statistics and applies the edit to a catalog name.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};

use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::alphabet::Alphabet;
use crate::catalog::Catalog;
use crate::corpus::EditType;
use crate::error::{Error, Result};
use crate::stats::{sample_index, StatsSource};
use crate::SampleRng;

pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SynthSample {
    pub text: String,
    pub label: usize,
    pub edit_type: EditType,
    pub source_dataset: String,
}

/// Where the generating statistics come from. Descriptive only; the caller
/// resolves it to a [`StatsSource`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Strategy {
    Uniform,
    Qwerty,
    Real { dataset: String },
    Fusion { weights: Vec<(String, f64)> },
}

impl Strategy {
    pub fn id(&self) -> String {
        match self {
            Strategy::Uniform => "uniform".into(),
            Strategy::Qwerty => "qwerty".into(),
            Strategy::Real { dataset } => format!("real:{dataset}"),
            Strategy::Fusion { weights } => {
                let parts: Vec<String> = weights.iter().map(|(d, w)| format!("{d}={w}")).collect();
                format!("fusion:{}", parts.join(","))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub samples_per_class: usize,
    pub keep_duplicate: bool,
    pub rng_seed: u64,
    pub max_retries: usize,
    pub strategy: Strategy,
}

impl GenerationConfig {
    pub fn new(
        samples_per_class: usize,
        keep_duplicate: bool,
        rng_seed: u64,
        strategy: Strategy,
    ) -> Self {
        Self {
            samples_per_class,
            keep_duplicate,
            rng_seed,
            max_retries: 100 * samples_per_class,
            strategy,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples_per_class == 0 {
            return Err(Error::GenerationConfig(
                "samples_per_class must be at least 1".into(),
            ));
        }
        if self.max_retries < self.samples_per_class {
            return Err(Error::GenerationConfig(format!(
                "max_retries {} is below samples_per_class {}",
                self.max_retries, self.samples_per_class
            )));
        }
        Ok(())
    }
}

/// Applies one edit of `edit_type` at `index`.
///
/// `key_dist` is the distribution over the alphabet for the new character:
/// the insertion marginal, or the substitution row of `s[index]`. Deletion,
/// replication and transposition ignore it. Draws that would not change the
/// string, or would read as another edit class, are excluded by conditioning
/// the distribution; when nothing is left `Error::ResampleType` is returned.
pub fn apply_typo(
    s: &str,
    edit_type: EditType,
    index: usize,
    key_dist: Option<&[f64]>,
    alphabet: &Alphabet,
    rng: &mut SampleRng,
) -> Result<String> {
    let mut chars: Vec<char> = s.chars().collect();
    assert!(index < chars.len(), "index {index} outside {s:?}");
    let resample = Error::ResampleType { edit_type };
    match edit_type {
        EditType::Deletion => {
            if chars.len() < 2 {
                return Err(resample);
            }
            chars.remove(index);
        }
        EditType::Replication => chars.insert(index, chars[index]),
        EditType::Transposition => {
            if chars.len() < 2 {
                return Err(resample);
            }
            let other = if index + 1 < chars.len() {
                index + 1
            } else {
                index - 1
            };
            if chars[index] == chars[other] {
                return Err(resample);
            }
            chars.swap(index, other);
        }
        EditType::Insertion | EditType::Substitution => {
            let dist = key_dist.ok_or_else(|| {
                Error::GenerationConfig(format!("{edit_type} needs a key distribution"))
            })?;
            if dist.len() != alphabet.len() {
                return Err(Error::Shape(format!(
                    "key distribution of width {}",
                    dist.len()
                )));
            }
            let mut excluded = vec![chars[index]];
            if edit_type == EditType::Insertion {
                // a copy of either neighbour would be a replication
                excluded.extend(chars.get(index + 1));
            }
            let mut probs = dist.to_vec();
            for c in excluded {
                if let Some(i) = alphabet.index_of(c) {
                    probs[i] = 0.0;
                }
            }
            let mass: f64 = probs.iter().sum();
            if mass <= 0.0 {
                return Err(resample);
            }
            probs.iter_mut().for_each(|p| *p /= mass);
            let c = alphabet.char_at(sample_index(&probs, rng));
            if edit_type == EditType::Insertion {
                chars.insert(index + 1, c);
            } else {
                chars[index] = c;
            }
        }
    }
    Ok(chars.into_iter().collect())
}

/// Seed of one class's generator, derived from the master seed and the
/// canonical name so that output does not depend on catalog order.
pub fn class_seed(master: u64, name: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(name.as_bytes());
    h.finalize().into()
}

/// Positions tried for one drawn edit class before the class is treated as
/// inapplicable to the string and redrawn.
const POSITION_TRIES: usize = 16;

/// One draw of the generator: a canonical string one edit away from `s_gt`,
/// or `None` when the drawn class could not be applied.
///
/// A degenerate edit (a no-op, or a result that is not canonical) redraws the
/// position and keys but keeps the class, so class frequencies follow the
/// statistics whenever every class is applicable.
fn draw_one(
    s_gt: &str,
    len: usize,
    source: &dyn StatsSource,
    rng: &mut SampleRng,
) -> Result<Option<(String, EditType, String)>> {
    let stats = source.draw(rng);
    let edit_type = stats.error_types.sample(rng);
    for _ in 0..POSITION_TRIES {
        let index = stats.sample_position(edit_type, len, rng);
        let key = s_gt.chars().nth(index).expect("index in range");
        let dist = match edit_type {
            EditType::Insertion | EditType::Substitution => Some(stats.key_row(edit_type, key)?),
            _ => None,
        };
        match apply_typo(s_gt, edit_type, index, dist, &stats.alphabet, rng) {
            Ok(text) if text != s_gt && stats.alphabet.is_canonical(&text) => {
                return Ok(Some((text, edit_type, stats.dataset_id.clone())));
            }
            Ok(_) | Err(Error::ResampleType { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(None)
}

/// Generates `samples_per_class` misspellings of one catalog name.
///
/// Degenerate draws are redrawn. Without `keep_duplicate`, repeats are
/// rejected. Every draw counts against `max_retries`.
pub fn generate_samples(
    s_gt: &str,
    label: usize,
    config: &GenerationConfig,
    source: &dyn StatsSource,
) -> Result<Vec<SynthSample>> {
    config.validate()?;
    let len = s_gt.chars().count();
    if len == 0 {
        return Err(Error::EmptyCatalogEntry(s_gt.to_string()));
    }
    let mut rng = SampleRng::from_seed(class_seed(config.rng_seed, s_gt));
    let wanted = config.samples_per_class;
    let mut out = Vec::with_capacity(wanted);
    let mut seen = HashSet::new();
    let mut attempts = 0;
    while out.len() < wanted {
        if attempts >= config.max_retries {
            return Err(Error::GenerationExhausted {
                name: s_gt.to_string(),
                produced: out.len(),
                wanted,
                attempts,
            });
        }
        attempts += 1;
        let Some((text, edit_type, source_dataset)) = draw_one(s_gt, len, source, &mut rng)? else {
            continue;
        };
        if !config.keep_duplicate && !seen.insert(text.clone()) {
            continue;
        }
        out.push(SynthSample {
            text,
            label,
            edit_type,
            source_dataset,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub config: GenerationConfig,
    pub stats_digest: String,
    pub catalog_digest: String,
    pub samples: Vec<SynthSample>,
}

/// Generates every class of the catalog. Classes run in parallel; each has
/// its own generator so the result equals a sequential run.
pub fn build_training_set(
    catalog: &Catalog,
    config: &GenerationConfig,
    source: &dyn StatsSource,
) -> Result<SyntheticDataset> {
    config.validate()?;
    let per_class: Vec<Vec<SynthSample>> = catalog
        .names()
        .par_iter()
        .enumerate()
        .map(|(label, name)| generate_samples(name, label, config, source))
        .collect::<Result<_>>()?;
    Ok(SyntheticDataset {
        config: config.clone(),
        stats_digest: source.digest(),
        catalog_digest: catalog.digest(),
        samples: per_class.into_iter().flatten().collect(),
    })
}

impl SyntheticDataset {
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header = String::new();
        writeln!(header, "# typofix-dataset v{DATASET_VERSION}").unwrap();
        writeln!(header, "# config: {}", serde_json::to_string(&self.config)?).unwrap();
        writeln!(header, "# stats-digest: {}", self.stats_digest).unwrap();
        writeln!(header, "# catalog-digest: {}", self.catalog_digest).unwrap();
        out.write_all(header.as_bytes())?;
        for s in &self.samples {
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                s.text, s.label, s.edit_type, s.source_dataset
            )?;
        }
        Ok(())
    }

    pub fn read_tsv<R: Read>(source: R) -> Result<Self> {
        let mut config = None;
        let mut stats_digest = None;
        let mut catalog_digest = None;
        let mut samples = Vec::new();
        for (n, line) in BufReader::new(source).lines().enumerate() {
            let line = line?;
            let bad = |what: &str| Error::DatasetFormat(format!("line {}: {what}", n + 1));
            if let Some(rest) = line.strip_prefix("# ") {
                if let Some(v) = rest.strip_prefix("typofix-dataset v") {
                    let found: u32 = v.trim().parse().map_err(|_| bad("bad version"))?;
                    if found != DATASET_VERSION {
                        return Err(Error::Version {
                            kind: "dataset",
                            found,
                            expected: DATASET_VERSION,
                        });
                    }
                } else if let Some(v) = rest.strip_prefix("config: ") {
                    config = Some(serde_json::from_str(v)?);
                } else if let Some(v) = rest.strip_prefix("stats-digest: ") {
                    stats_digest = Some(v.to_string());
                } else if let Some(v) = rest.strip_prefix("catalog-digest: ") {
                    catalog_digest = Some(v.to_string());
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let [text, label, edit_type, source_dataset] = f[..] else {
                return Err(bad("expected 4 fields"));
            };
            samples.push(SynthSample {
                text: text.to_string(),
                label: label.parse().map_err(|_| bad("bad label"))?,
                edit_type: edit_type.parse()?,
                source_dataset: source_dataset.to_string(),
            });
        }
        Ok(Self {
            config: config.ok_or_else(|| Error::DatasetFormat("missing config header".into()))?,
            stats_digest: stats_digest
                .ok_or_else(|| Error::DatasetFormat("missing stats digest".into()))?,
            catalog_digest: catalog_digest
                .ok_or_else(|| Error::DatasetFormat("missing catalog digest".into()))?,
            samples,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{classify_single_edit, TypoPair};
    use crate::stats::{uniform_stats, KeyLookup};

    fn rng() -> SampleRng {
        SampleRng::seed_from_u64(5)
    }

    fn point_mass(c: char) -> Vec<f64> {
        let a = Alphabet::default();
        let mut p = vec![0.0; a.len()];
        p[a.index_of(c).unwrap()] = 1.0;
        p
    }

    #[test]
    fn documented_edits() {
        let a = Alphabet::default();
        let mut r = rng();
        assert_eq!(
            apply_typo("finally", EditType::Deletion, 3, None, &a, &mut r).unwrap(),
            "finlly"
        );
        assert_eq!(
            apply_typo("finally", EditType::Replication, 1, None, &a, &mut r).unwrap(),
            "fiinally"
        );
        assert_eq!(
            apply_typo("ab", EditType::Transposition, 0, None, &a, &mut r).unwrap(),
            "ba"
        );
        assert_eq!(
            apply_typo("ab", EditType::Transposition, 1, None, &a, &mut r).unwrap(),
            "ba"
        );
        let e = point_mass('e');
        assert_eq!(
            apply_typo("finally", EditType::Substitution, 3, Some(&e), &a, &mut r).unwrap(),
            "finelly"
        );
        let x = point_mass('x');
        assert_eq!(
            apply_typo("finally", EditType::Insertion, 0, Some(&x), &a, &mut r).unwrap(),
            "fxinally"
        );
    }

    #[test]
    fn degenerate_edits_signal_resample() {
        let a = Alphabet::default();
        let mut r = rng();
        let self_row = point_mass('a');
        assert!(matches!(
            apply_typo(
                "finally",
                EditType::Substitution,
                3,
                Some(&self_row),
                &a,
                &mut r
            ),
            Err(Error::ResampleType { .. })
        ));
        assert!(matches!(
            apply_typo("a", EditType::Transposition, 0, None, &a, &mut r),
            Err(Error::ResampleType { .. })
        ));
        assert!(matches!(
            apply_typo("aa", EditType::Transposition, 0, None, &a, &mut r),
            Err(Error::ResampleType { .. })
        ));
        assert!(matches!(
            apply_typo("a", EditType::Deletion, 0, None, &a, &mut r),
            Err(Error::ResampleType { .. })
        ));
        // inserting a copy of the next character is excluded
        let n = point_mass('n');
        assert!(matches!(
            apply_typo("finally", EditType::Insertion, 1, Some(&n), &a, &mut r),
            Err(Error::ResampleType { .. })
        ));
    }

    #[test]
    fn substitution_never_keeps_the_key() {
        let a = Alphabet::default();
        let s = uniform_stats(&a, 10).unwrap();
        let KeyLookup::Distribution { probs, .. } =
            s.lookup_key_dist(EditType::Substitution, 'a').unwrap()
        else {
            panic!()
        };
        let mut r = rng();
        for _ in 0..500 {
            let out = apply_typo(
                "finally",
                EditType::Substitution,
                3,
                Some(probs),
                &a,
                &mut r,
            )
            .unwrap();
            assert_ne!(out.chars().nth(3), Some('a'));
        }
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let s = uniform_stats(&Alphabet::default(), 10).unwrap();
        let cfg = GenerationConfig::new(10, true, 7, Strategy::Uniform);
        let a = generate_samples("ab", 0, &cfg, &s).unwrap();
        let b = generate_samples("ab", 0, &cfg, &s).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
    }

    /// Every string exactly one classified edit away from `s`.
    fn one_edit_neighbourhood(s: &str, alphabet: &Alphabet) -> HashSet<String> {
        let chars: Vec<char> = s.chars().collect();
        let mut out = HashSet::new();
        for i in 0..=chars.len() {
            if i < chars.len() {
                let mut d = chars.clone();
                d.remove(i);
                out.insert(d.iter().collect::<String>());
            }
            for &c in alphabet.chars() {
                let mut ins = chars.clone();
                ins.insert(i, c);
                out.insert(ins.iter().collect::<String>());
                if i < chars.len() {
                    let mut sub = chars.clone();
                    sub[i] = c;
                    out.insert(sub.iter().collect::<String>());
                }
            }
            if i + 1 < chars.len() {
                let mut t = chars.clone();
                t.swap(i, i + 1);
                out.insert(t.iter().collect::<String>());
            }
        }
        out.retain(|t| t != s && !t.is_empty() && alphabet.is_canonical(t));
        out
    }

    #[test]
    fn short_names_exhaust_without_duplicates() {
        let a = Alphabet::default();
        let distinct = one_edit_neighbourhood("ab", &a).len();
        let s = uniform_stats(&a, 10).unwrap();
        let mut cfg = GenerationConfig::new(distinct + 1, false, 1, Strategy::Uniform);
        cfg.max_retries = 200 * cfg.samples_per_class;
        match generate_samples("ab", 0, &cfg, &s) {
            Err(Error::GenerationExhausted { produced, .. }) => assert!(produced <= distinct),
            other => panic!("expected exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn uniform_type_frequencies() {
        let s = uniform_stats(&Alphabet::default(), 10).unwrap();
        let cfg = GenerationConfig::new(1000, true, 3, Strategy::Uniform);
        let samples = generate_samples("finally", 0, &cfg, &s).unwrap();
        for t in EditType::ALL {
            let f = samples.iter().filter(|x| x.edit_type == t).count() as f64 / 1000.0;
            assert!((f - 0.2).abs() < 0.04, "{t}: {f}");
        }
    }

    #[test]
    fn samples_classify_back_to_their_type() {
        let s = uniform_stats(&Alphabet::default(), 10).unwrap();
        let cfg = GenerationConfig::new(300, true, 9, Strategy::Uniform);
        for name in ["finally", "power bi", "a", "zz top 2"] {
            for x in generate_samples(name, 0, &cfg, &s).unwrap() {
                let e = classify_single_edit(&TypoPair::new(x.text.clone(), name), "u")
                    .expect("one edit");
                assert_eq!(e.edit_type, x.edit_type, "{name} -> {}", x.text);
            }
        }
    }

    #[test]
    fn no_duplicates_when_disabled() {
        let s = uniform_stats(&Alphabet::default(), 10).unwrap();
        let cfg = GenerationConfig::new(40, false, 4, Strategy::Uniform);
        let out = generate_samples("contoso sales", 0, &cfg, &s).unwrap();
        let set: HashSet<_> = out.iter().map(|x| &x.text).collect();
        assert_eq!(set.len(), out.len());
    }

    #[test]
    fn config_validation() {
        let mut cfg = GenerationConfig::new(0, true, 1, Strategy::Uniform);
        assert!(cfg.validate().is_err());
        cfg.samples_per_class = 5;
        cfg.max_retries = 4;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn dataset_file_round_trip() {
        let a = Alphabet::default();
        let s = uniform_stats(&a, 10).unwrap();
        let catalog = Catalog::new(&["alpha", "beta gamma"], &a).unwrap();
        let cfg = GenerationConfig::new(3, true, 2, Strategy::Uniform);
        let ds = build_training_set(&catalog, &cfg, &s).unwrap();
        let mut buf = Vec::new();
        ds.write_tsv(&mut buf).unwrap();
        assert_eq!(SyntheticDataset::read_tsv(buf.as_slice()).unwrap(), ds);
        assert!(SyntheticDataset::read_tsv("x\t1\n".as_bytes()).is_err());
    }
}
