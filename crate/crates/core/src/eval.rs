//! Accuracy on labelled typo queries, the strategy comparison matrix, the
//! fusion-weight grid search and the sample-size sweep.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::alphabet::Alphabet;
use crate::baseline::{correct_query, FrequencyDictionary};
use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::index::{build_index, EmbeddingIndex};
use crate::keyboard::KeyboardLayout;
use crate::model::{train, Checkpoint, ModelConfig, ModelParams};
use crate::stats::{fuse, qwerty_stats, uniform_stats, FusionSpec, StatsModel, StatsSource};
use crate::syngen::{
    build_training_set, generate_samples, GenerationConfig, Strategy, SyntheticDataset,
};

/// Maps canonical queries to catalog classes; `None` means no answer.
pub trait Predictor: Sync {
    fn label(&self) -> String;
    fn predict(&self, queries: &[String]) -> Result<Vec<Option<usize>>>;
}

pub struct NeuralPredictor<'a> {
    pub params: &'a ModelParams,
    pub index: &'a EmbeddingIndex,
    pub alphabet: &'a Alphabet,
}

impl Predictor for NeuralPredictor<'_> {
    fn label(&self) -> String {
        "neural".into()
    }

    fn predict(&self, queries: &[String]) -> Result<Vec<Option<usize>>> {
        Ok(self
            .index
            .nearest_batch(self.params, self.alphabet, queries)?
            .into_iter()
            .map(Some)
            .collect())
    }
}

/// Dictionary correction followed by an exact catalog lookup.
pub struct BaselinePredictor<'a> {
    pub dictionary: &'a FrequencyDictionary,
    pub catalog: &'a Catalog,
    pub max_edit: usize,
}

impl Predictor for BaselinePredictor<'_> {
    fn label(&self) -> String {
        format!("baseline:{}", self.dictionary.source)
    }

    fn predict(&self, queries: &[String]) -> Result<Vec<Option<usize>>> {
        Ok(queries
            .par_iter()
            .map(|q| {
                self.catalog
                    .class_of(&correct_query(q, self.dictionary, self.max_edit))
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    HeldOutSynthetic {
        seed: u64,
        edits: usize,
        stats_digest: String,
    },
    ManualFile,
    Catalog,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationSet {
    pub queries: Vec<String>,
    pub labels: Vec<usize>,
    pub provenance: Provenance,
}

impl ValidationSet {
    /// Typos of every catalog entry drawn from statistics that no training
    /// configuration uses. Each query carries `edits` successive edits; the
    /// per-class queries are distinct.
    pub fn held_out(
        catalog: &Catalog,
        stats: &StatsModel,
        per_class: usize,
        edits: usize,
        seed: u64,
    ) -> Result<Self> {
        if edits == 0 {
            return Err(Error::Experiment(
                "held-out queries need at least one edit".into(),
            ));
        }
        let strategy = Strategy::Real {
            dataset: stats.dataset_id.clone(),
        };
        let first = GenerationConfig::new(per_class, false, seed, strategy.clone());
        let ds = build_training_set(catalog, &first, stats)?;
        let mut queries = Vec::with_capacity(ds.samples.len());
        let mut labels = Vec::with_capacity(ds.samples.len());
        for s in ds.samples {
            let mut text = s.text;
            for round in 1..edits {
                let more = GenerationConfig::new(
                    1,
                    true,
                    seed.wrapping_add(round as u64),
                    strategy.clone(),
                );
                text = generate_samples(&text, s.label, &more, stats)?
                    .remove(0)
                    .text;
            }
            queries.push(text);
            labels.push(s.label);
        }
        Ok(Self {
            queries,
            labels,
            provenance: Provenance::HeldOutSynthetic {
                seed,
                edits,
                stats_digest: stats.digest(),
            },
        })
    }

    /// The catalog names themselves.
    pub fn from_catalog(catalog: &Catalog) -> Self {
        Self {
            queries: catalog.names().to_vec(),
            labels: (0..catalog.len()).collect(),
            provenance: Provenance::Catalog,
        }
    }

    /// `query<TAB>catalog name` per line; `#` comments skipped.
    pub fn read<R: Read>(source: R, catalog: &Catalog, alphabet: &Alphabet) -> Result<Self> {
        let mut queries = Vec::new();
        let mut labels = Vec::new();
        for (n, line) in BufReader::new(source).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |m: String| Error::Experiment(format!("validation line {}: {m}", n + 1));
            let (q, name) = line
                .split_once('\t')
                .ok_or_else(|| bad("expected query<TAB>name".into()))?;
            let q = alphabet.canonicalize(q);
            if q.is_empty() {
                return Err(bad("empty query".into()));
            }
            let class = catalog
                .class_of(&alphabet.canonicalize(name))
                .ok_or_else(|| bad(format!("{name:?} is not in the catalog")))?;
            queries.push(q);
            labels.push(class);
        }
        if queries.is_empty() {
            return Err(Error::EmptyValidation);
        }
        Ok(Self {
            queries,
            labels,
            provenance: Provenance::ManualFile,
        })
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    /// Seeds consumed by a held-out draw.
    pub fn seeds(&self) -> std::ops::Range<u64> {
        match self.provenance {
            Provenance::HeldOutSynthetic { seed, edits, .. } => {
                seed..seed.saturating_add(edits as u64)
            }
            _ => 0..0,
        }
    }

    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (q, l) in self.queries.iter().zip(&self.labels) {
            h.update(q.as_bytes());
            h.update(b"\t");
            h.update(l.to_string().as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

/// Fraction of queries whose predicted class equals the label.
pub fn evaluate(predictor: &dyn Predictor, validation: &ValidationSet) -> Result<f64> {
    if validation.is_empty() {
        return Err(Error::EmptyValidation);
    }
    let predicted = predictor.predict(&validation.queries)?;
    let correct = predicted
        .iter()
        .zip(&validation.labels)
        .filter(|(p, l)| **p == Some(**l))
        .count();
    Ok(correct as f64 / validation.len() as f64)
}

/// One trained configuration of the matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowSpec {
    pub strategy: Strategy,
    pub keep_duplicate: bool,
    pub samples_per_class: usize,
    /// generation and initialization seed
    pub seed: u64,
}

impl RowSpec {
    pub fn new(strategy: Strategy, samples_per_class: usize, seed: u64) -> Self {
        Self {
            strategy,
            keep_duplicate: true,
            samples_per_class,
            seed,
        }
    }

    pub fn label(&self) -> String {
        let dup = if self.keep_duplicate {
            ""
        } else {
            " w/o duplicates"
        };
        format!(
            "{}{dup} N={} seed={}",
            self.strategy.id(),
            self.samples_per_class,
            self.seed
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    /// absent for dictionary baselines
    pub spec: Option<RowSpec>,
    pub accuracy: Option<f64>,
    pub error: Option<String>,
    /// excluded from the serialized report so re-runs compare byte-equal
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub crate_version: String,
    pub catalog_digest: String,
    pub catalog_size: usize,
    pub validation_digest: String,
    pub validation_size: usize,
    pub validation: Provenance,
    pub model: ModelConfig,
    pub dictionary: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub environment: Environment,
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec_pretty(self)?;
        out.push(b'\n');
        Ok(out)
    }

    /// Mean accuracy of the successful rows matching `pred`.
    pub fn mean_accuracy(&self, pred: impl Fn(&ReportRow) -> bool) -> Option<f64> {
        let accs: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| pred(r))
            .filter_map(|r| r.accuracy)
            .collect();
        (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64)
    }

    pub fn render_table(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.label.len())
            .max()
            .unwrap_or(10)
            .max(13);
        let mut s = String::new();
        writeln!(
            s,
            "{:<width$}  {:>8}  {:>8}",
            "configuration", "accuracy", "time s"
        )
        .unwrap();
        for r in &self.rows {
            let acc = match (&r.accuracy, &r.error) {
                (Some(a), _) => format!("{:.2}%", 100.0 * a),
                (None, Some(_)) => "failed".into(),
                _ => "-".into(),
            };
            writeln!(
                s,
                "{:<width$}  {:>8}  {:>8.1}",
                r.label, acc, r.wall_clock_secs
            )
            .unwrap();
            if let Some(e) = &r.error {
                writeln!(s, "    error: {e}").unwrap();
            }
        }
        s
    }
}

/// Artifacts of one trained row.
pub struct RowOutcome {
    pub accuracy: f64,
    pub dataset: SyntheticDataset,
    pub checkpoint: Checkpoint,
    pub checkpoint_digest: String,
    pub index: EmbeddingIndex,
}

/// Shared inputs of every row: catalog, real-world statistics by dataset id,
/// the validation set and the model template.
pub struct Experiment {
    pub catalog: Catalog,
    pub alphabet: Alphabet,
    pub datasets: BTreeMap<String, Arc<StatsModel>>,
    pub validation: ValidationSet,
    /// `num_classes` and `init_seed` are overridden per row
    pub model: ModelConfig,
    pub bins: usize,
}

impl Experiment {
    pub fn source_for(&self, strategy: &Strategy) -> Result<Box<dyn StatsSource>> {
        let dataset = |id: &str| {
            self.datasets
                .get(id)
                .cloned()
                .ok_or_else(|| Error::Experiment(format!("unknown dataset {id:?}")))
        };
        Ok(match strategy {
            Strategy::Uniform => Box::new(uniform_stats(&self.alphabet, self.bins)?),
            Strategy::Qwerty => Box::new(qwerty_stats(
                &self.alphabet,
                &KeyboardLayout::qwerty(),
                self.bins,
            )?),
            Strategy::Real { dataset: id } => Box::new(dataset(id)?),
            Strategy::Fusion { weights } => {
                let components = weights
                    .iter()
                    .map(|(id, w)| Ok((dataset(id)?, *w)))
                    .collect::<Result<Vec<_>>>()?;
                Box::new(fuse(&FusionSpec { components })?)
            }
        })
    }

    pub fn model_config(&self, seed: u64) -> ModelConfig {
        ModelConfig {
            num_classes: self.catalog.len(),
            init_seed: seed,
            ..self.model.clone()
        }
    }

    /// Generate, train, index and evaluate one configuration.
    pub fn run_row(&self, spec: &RowSpec) -> Result<RowOutcome> {
        if self.validation.seeds().contains(&spec.seed) {
            return Err(Error::Experiment(format!(
                "row seed {} is a validation seed",
                spec.seed
            )));
        }
        let source = self.source_for(&spec.strategy)?;
        let gen = GenerationConfig::new(
            spec.samples_per_class,
            spec.keep_duplicate,
            spec.seed,
            spec.strategy.clone(),
        );
        let dataset = build_training_set(&self.catalog, &gen, source.as_ref())?;
        let texts: Vec<&str> = dataset.samples.iter().map(|s| s.text.as_str()).collect();
        let labels: Vec<usize> = dataset.samples.iter().map(|s| s.label).collect();
        let trained = train(
            &self.model_config(spec.seed),
            &self.alphabet,
            &texts,
            &labels,
            |_, _| {},
        )?;
        let checkpoint = Checkpoint::from(trained);
        let checkpoint_digest = checkpoint.digest()?;
        let index = build_index(
            &checkpoint.params,
            &checkpoint_digest,
            &self.catalog,
            &self.alphabet,
        )?;
        let accuracy = evaluate(
            &NeuralPredictor {
                params: &checkpoint.params,
                index: &index,
                alphabet: &self.alphabet,
            },
            &self.validation,
        )?;
        Ok(RowOutcome {
            accuracy,
            dataset,
            checkpoint,
            checkpoint_digest,
            index,
        })
    }

    fn environment(&self, dictionary: Option<String>) -> Environment {
        Environment {
            crate_version: env!("CARGO_PKG_VERSION").into(),
            catalog_digest: self.catalog.digest(),
            catalog_size: self.catalog.len(),
            validation_digest: self.validation.digest(),
            validation_size: self.validation.len(),
            validation: self.validation.provenance.clone(),
            model: self.model.clone(),
            dictionary,
        }
    }

    /// Runs every configuration; a failing row records its error and the
    /// others proceed. Dictionary baselines are appended when given.
    pub fn run_matrix(
        &self,
        specs: &[RowSpec],
        baselines: &[&FrequencyDictionary],
        max_edit: usize,
    ) -> ExperimentReport {
        self.run_matrix_with(specs, baselines, max_edit, |_| {})
    }

    /// As [`Experiment::run_matrix`], reporting each finished row.
    pub fn run_matrix_with(
        &self,
        specs: &[RowSpec],
        baselines: &[&FrequencyDictionary],
        max_edit: usize,
        on_row: impl Fn(&ReportRow) + Sync,
    ) -> ExperimentReport {
        let mut rows: Vec<ReportRow> = specs
            .par_iter()
            .map(|spec| {
                let start = Instant::now();
                let outcome = self.run_row(spec);
                let row = ReportRow {
                    label: spec.label(),
                    spec: Some(spec.clone()),
                    accuracy: outcome.as_ref().ok().map(|o| o.accuracy),
                    error: outcome.err().map(|e| e.to_string()),
                    wall_clock_secs: start.elapsed().as_secs_f64(),
                };
                on_row(&row);
                row
            })
            .collect();
        for dict in baselines {
            let start = Instant::now();
            let predictor = BaselinePredictor {
                dictionary: dict,
                catalog: &self.catalog,
                max_edit,
            };
            let result = evaluate(&predictor, &self.validation);
            let row = ReportRow {
                label: format!("{} ({})", predictor.label(), dict.label),
                spec: None,
                accuracy: result.as_ref().ok().copied(),
                error: result.err().map(|e| e.to_string()),
                wall_clock_secs: start.elapsed().as_secs_f64(),
            };
            on_row(&row);
            rows.push(row);
        }
        let dictionary = baselines.first().map(|d| d.label.clone());
        ExperimentReport {
            environment: self.environment(dictionary),
            rows,
        }
    }
}

/// Every weight vector over `dims` datasets whose entries are multiples of
/// `step` and sum to 1, in lexicographic order.
pub fn simplex_points(dims: usize, step: f64) -> Result<Vec<Vec<f64>>> {
    if dims == 0 {
        return Err(Error::Experiment("no datasets".into()));
    }
    let parts = (1.0 / step).round();
    if !(step > 0.0 && step <= 1.0) || (parts * step - 1.0).abs() > 1e-9 {
        return Err(Error::Experiment(format!(
            "grid step {step} does not divide 1"
        )));
    }
    let parts = parts as usize;
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(dims);
    fn rec(
        dims: usize,
        left: usize,
        parts: usize,
        current: &mut Vec<usize>,
        out: &mut Vec<Vec<f64>>,
    ) {
        if current.len() == dims - 1 {
            current.push(left);
            out.push(current.iter().map(|&c| c as f64 / parts as f64).collect());
            current.pop();
            return;
        }
        for c in 0..=left {
            current.push(c);
            rec(dims, left - c, parts, current, out);
            current.pop();
        }
    }
    rec(dims, parts, parts, &mut current, &mut out);
    Ok(out)
}

/// Number of simplex points without enumerating them: C(parts + dims − 1, dims − 1).
pub fn simplex_size(dims: usize, parts: usize) -> u128 {
    let (n, k) = ((parts + dims - 1) as u128, (dims - 1) as u128);
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub weights: Vec<f64>,
    pub accuracies: Vec<f64>,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionGridResult {
    pub datasets: Vec<String>,
    pub surface: Vec<GridPoint>,
    /// index into `surface` of the first point with the highest mean
    pub best: usize,
}

impl Experiment {
    /// Evaluates every fusion weight vector on the simplex grid.
    pub fn fusion_grid_search(
        &self,
        datasets: &[String],
        step: f64,
        budget: usize,
        samples_per_class: usize,
        seeds: &[u64],
    ) -> Result<FusionGridResult> {
        if datasets.len() < 2 {
            return Err(Error::Experiment(
                "fusion needs at least two datasets".into(),
            ));
        }
        if seeds.is_empty() {
            return Err(Error::Experiment("no seeds".into()));
        }
        let parts = (1.0 / step).round() as usize;
        let cells = simplex_size(datasets.len(), parts.max(1)) * seeds.len() as u128;
        if cells > budget as u128 {
            return Err(Error::Experiment(format!(
                "grid needs {cells} trainings, budget is {budget}"
            )));
        }
        let points = simplex_points(datasets.len(), step)?;
        let specs: Vec<RowSpec> = points
            .iter()
            .flat_map(|w| {
                seeds.iter().map(move |&seed| {
                    RowSpec::new(
                        Strategy::Fusion {
                            weights: datasets.iter().cloned().zip(w.iter().copied()).collect(),
                        },
                        samples_per_class,
                        seed,
                    )
                })
            })
            .collect();
        let accs = specs
            .par_iter()
            .map(|s| self.run_row(s).map(|o| o.accuracy))
            .collect::<Result<Vec<f64>>>()?;
        let surface: Vec<GridPoint> = points
            .into_iter()
            .zip(accs.chunks(seeds.len()))
            .map(|(weights, a)| GridPoint {
                weights,
                accuracies: a.to_vec(),
                mean_accuracy: a.iter().sum::<f64>() / a.len() as f64,
            })
            .collect();
        let best = surface.iter().enumerate().fold(0, |b, (i, p)| {
            if p.mean_accuracy > surface[b].mean_accuracy {
                i
            } else {
                b
            }
        });
        Ok(FusionGridResult {
            datasets: datasets.to_vec(),
            surface,
            best,
        })
    }

    /// Accuracy for each samples-per-class value, averaged over seeds.
    pub fn sample_size_sweep(
        &self,
        strategy: &Strategy,
        n_values: &[usize],
        seeds: &[u64],
    ) -> Result<Vec<SweepPoint>> {
        if n_values.is_empty() || n_values.contains(&0) {
            return Err(Error::Experiment("sample sizes must be at least 1".into()));
        }
        if n_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Experiment(
                "sample sizes must be strictly ascending".into(),
            ));
        }
        if seeds.is_empty() {
            return Err(Error::Experiment("no seeds".into()));
        }
        let specs: Vec<RowSpec> = n_values
            .iter()
            .flat_map(|&n| {
                seeds
                    .iter()
                    .map(move |&seed| RowSpec::new(strategy.clone(), n, seed))
            })
            .collect();
        let accs = specs
            .par_iter()
            .map(|s| self.run_row(s).map(|o| o.accuracy))
            .collect::<Result<Vec<f64>>>()?;
        Ok(n_values
            .iter()
            .zip(accs.chunks(seeds.len()))
            .map(|(&n, a)| SweepPoint {
                samples_per_class: n,
                accuracies: a.to_vec(),
                mean_accuracy: a.iter().sum::<f64>() / a.len() as f64,
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub samples_per_class: usize,
    pub accuracies: Vec<f64>,
    pub mean_accuracy: f64,
}
