use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use typofix::alphabet::Alphabet;
use typofix::baseline::FrequencyDictionary;
use typofix::catalog::Catalog;
use typofix::corpus::{classify_corpus, parse_corpus, CorpusFormat, EditType};
use typofix::eval::{evaluate, NeuralPredictor, RowSpec, ValidationSet};
use typofix::fixtures;
use typofix::index::{build_index, EmbeddingIndex};
use typofix::keyboard::KeyboardLayout;
use typofix::model::{train, Checkpoint, ModelConfig};
use typofix::stats::{
    build_stats, fuse, qwerty_stats, uniform_stats, FusionSpec, StatsModel, StatsSource,
    DEFAULT_BINS,
};
use typofix::syngen::{build_training_set, GenerationConfig, Strategy, SyntheticDataset};
use typofix_server::bench::measure_latency;
use typofix_server::config::FileConfig;
use typofix_server::service;

#[derive(Parser)]
#[command(
    name = "typofix",
    version,
    about = "Typo-tolerant catalog search trained on synthetic misspellings"
)]
struct Cli {
    /// Master seed for generation and training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML file with `seed`, `[model]` and `[service]` sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CatalogArgs {
    /// One product name per line; defaults to the bundled catalog.
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Keep only the first N entries.
    #[arg(long)]
    catalog_size: Option<usize>,
}

impl CatalogArgs {
    fn load(&self, alphabet: &Alphabet) -> Result<Catalog> {
        let catalog = match &self.catalog {
            Some(p) => Catalog::read(
                File::open(p).with_context(|| p.display().to_string())?,
                alphabet,
            )?,
            None => fixtures::catalog(alphabet)?,
        };
        Ok(match self.catalog_size {
            Some(n) => catalog.truncate(n),
            None => catalog,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse a typo corpus into canonical `wrong<TAB>correct<TAB>weight` pairs.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "tsv")]
        format: CorpusFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build typo statistics from a corpus, or the uniform / keyboard presets.
    Stats {
        #[arg(long, required_unless_present_any = ["uniform", "qwerty"])]
        input: Option<PathBuf>,
        #[arg(long, default_value = "tsv")]
        format: CorpusFormat,
        /// Dataset identifier recorded in the statistics.
        #[arg(long)]
        id: Option<String>,
        #[arg(long, conflicts_with = "qwerty")]
        uniform: bool,
        #[arg(long)]
        qwerty: bool,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate fusion weights and write a fusion spec (`stats.json=weight`).
    Fuse {
        #[arg(long = "component", required = true)]
        components: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic training set for a catalog.
    Gen {
        #[command(flatten)]
        catalog: CatalogArgs,
        /// `uniform`, `qwerty`, a statistics file or a fusion spec.
        #[arg(long, default_value = "uniform")]
        source: String,
        #[arg(long, default_value_t = 20)]
        samples_per_class: usize,
        #[arg(long)]
        no_duplicates: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the classifier on a generated data set.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Embed every catalog entry with a checkpoint.
    Index {
        #[command(flatten)]
        catalog: CatalogArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Accuracy of a checkpoint and index on a validation set.
    Eval {
        #[command(flatten)]
        catalog: CatalogArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        index: PathBuf,
        /// `query<TAB>name` file; defaults to typos drawn from the held-out corpus.
        #[arg(long)]
        validation: Option<PathBuf>,
    },
    /// Run the strategy comparison on the bundled data.
    Matrix {
        #[arg(long, default_value_t = 200)]
        catalog_size: usize,
        #[arg(long, default_value_t = 20)]
        samples_per_class: usize,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        seeds: Vec<u64>,
        /// Also run QWERTY, duplicate-free and equal-weight fusion rows.
        #[arg(long)]
        full: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Accuracy as a function of samples per class.
    Sweep {
        #[arg(long, default_value_t = 200)]
        catalog_size: usize,
        #[arg(long, value_delimiter = ',', default_value = "4,8,16,32")]
        samples: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        seeds: Vec<u64>,
        /// `uniform`, `qwerty` or a bundled dataset id.
        #[arg(long, default_value = "github")]
        strategy: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve corrections over HTTP.
    Serve {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        host: Option<String>,
        #[arg(long)]
        port: Option<u16>,
    },
    /// Measure latency of a running service.
    Bench {
        #[arg(long, default_value = "http://127.0.0.1:8080")]
        url: String,
        #[command(flatten)]
        catalog: CatalogArgs,
        #[arg(long, default_value_t = 8)]
        concurrency: usize,
        #[arg(long, default_value_t = 10_000)]
        requests: usize,
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
}

#[derive(Serialize, Deserialize)]
struct FusionFile {
    components: Vec<FusionEntry>,
}

#[derive(Serialize, Deserialize)]
struct FusionEntry {
    stats: PathBuf,
    weight: f64,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn read_stats(path: &Path) -> Result<StatsModel> {
    let bytes = fs::read(path).with_context(|| path.display().to_string())?;
    Ok(StatsModel::load(&bytes)?)
}

fn fusion_from_file(path: &Path) -> Result<(FusionSpec, Strategy)> {
    let file: FusionFile = serde_json::from_slice(&fs::read(path)?)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut components = Vec::new();
    let mut weights = Vec::new();
    for c in file.components {
        let p = if c.stats.is_absolute() {
            c.stats
        } else {
            base.join(c.stats)
        };
        let m = read_stats(&p)?;
        weights.push((m.dataset_id.clone(), c.weight));
        components.push((Arc::new(m), c.weight));
    }
    Ok((FusionSpec { components }, Strategy::Fusion { weights }))
}

fn resolve_source(source: &str, alphabet: &Alphabet) -> Result<(Box<dyn StatsSource>, Strategy)> {
    Ok(match source {
        "uniform" => (
            Box::new(uniform_stats(alphabet, DEFAULT_BINS)?),
            Strategy::Uniform,
        ),
        "qwerty" => (
            Box::new(qwerty_stats(
                alphabet,
                &KeyboardLayout::qwerty(),
                DEFAULT_BINS,
            )?),
            Strategy::Qwerty,
        ),
        path => {
            let path = Path::new(path);
            let bytes = fs::read(path).with_context(|| path.display().to_string())?;
            match StatsModel::load(&bytes) {
                Ok(m) => {
                    let strategy = Strategy::Real {
                        dataset: m.dataset_id.clone(),
                    };
                    (Box::new(m), strategy)
                }
                Err(_) => {
                    let (spec, strategy) = fusion_from_file(path)?;
                    (Box::new(fuse(&spec)?), strategy)
                }
            }
        }
    })
}

fn model_config(file: &FileConfig, num_classes: usize, seed: u64) -> ModelConfig {
    let mut cfg = file.model.apply(ModelConfig::desk(num_classes));
    cfg.init_seed = seed;
    cfg
}

fn strategy_named(name: &str) -> Strategy {
    match name {
        "uniform" => Strategy::Uniform,
        "qwerty" => Strategy::Qwerty,
        d => Strategy::Real { dataset: d.into() },
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let file = match &cli.config {
        Some(p) => FileConfig::read(p).with_context(|| format!("reading {}", p.display()))?,
        None => FileConfig::default(),
    };
    let seed = cli.seed.or(file.seed).unwrap_or(1);
    let alphabet = Alphabet::default();
    match cli.command {
        Command::Ingest { input, format, out } => {
            let parsed = parse_corpus(File::open(&input)?, format, &alphabet)?;
            let (events, dropped) = classify_corpus(&parsed.pairs, "ingest");
            eprintln!(
                "{} pairs, {} malformed lines skipped, {} single edits, {} unclassifiable",
                parsed.pairs.len(),
                parsed.skipped,
                events.len(),
                dropped
            );
            for t in EditType::ALL {
                let n: u64 = events
                    .iter()
                    .filter(|e| e.edit_type == t)
                    .map(|e| u64::from(e.weight))
                    .sum();
                eprintln!("  {:<14} {n}", t.name());
            }
            let mut w: Box<dyn Write> = match out {
                Some(p) => Box::new(BufWriter::new(File::create(p)?)),
                None => Box::new(std::io::stdout().lock()),
            };
            for p in &parsed.pairs {
                writeln!(w, "{}\t{}\t{}", p.wrong, p.correct, p.weight)?;
            }
        }
        Command::Stats {
            input,
            format,
            id,
            uniform,
            qwerty,
            bins,
            out,
        } => {
            let stats = if uniform {
                uniform_stats(&alphabet, bins)?
            } else if qwerty {
                qwerty_stats(&alphabet, &KeyboardLayout::qwerty(), bins)?
            } else {
                let input = input.expect("required by clap");
                let id = id.unwrap_or_else(|| {
                    input
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_default()
                });
                let parsed = parse_corpus(File::open(&input)?, format, &alphabet)?;
                let (events, dropped) = classify_corpus(&parsed.pairs, &id);
                eprintln!("{} events, {} pairs dropped", events.len(), dropped);
                build_stats(&events, &alphabet, bins)?
            };
            write_file(&out, &stats.save())?;
            println!("{}", stats.digest());
        }
        Command::Fuse { components, out } => {
            let mut entries = Vec::new();
            let mut spec = Vec::new();
            for c in &components {
                let (path, w) = c
                    .rsplit_once('=')
                    .context("component must be stats.json=weight")?;
                let weight: f64 = w.parse().with_context(|| format!("weight {w:?}"))?;
                spec.push((Arc::new(read_stats(Path::new(path))?), weight));
                entries.push(FusionEntry {
                    stats: fs::canonicalize(path)?,
                    weight,
                });
            }
            let selector = fuse(&FusionSpec { components: spec })?;
            write_file(
                &out,
                &serde_json::to_vec_pretty(&FusionFile {
                    components: entries,
                })?,
            )?;
            println!("{}", selector.digest());
        }
        Command::Gen {
            catalog,
            source,
            samples_per_class,
            no_duplicates,
            out,
        } => {
            let catalog = catalog.load(&alphabet)?;
            let (source, strategy) = resolve_source(&source, &alphabet)?;
            let cfg = GenerationConfig::new(samples_per_class, !no_duplicates, seed, strategy);
            let ds = build_training_set(&catalog, &cfg, source.as_ref())?;
            let mut w = BufWriter::new(File::create(&out)?);
            ds.write_tsv(&mut w)?;
            w.flush()?;
            eprintln!("{} samples for {} classes", ds.samples.len(), catalog.len());
        }
        Command::Train {
            dataset,
            out,
            epochs,
        } => {
            let ds = SyntheticDataset::read_tsv(File::open(&dataset)?)?;
            let classes = ds
                .samples
                .iter()
                .map(|s| s.label)
                .max()
                .map_or(0, |m| m + 1);
            let mut cfg = model_config(&file, classes, seed);
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            let texts: Vec<&str> = ds.samples.iter().map(|s| s.text.as_str()).collect();
            let labels: Vec<usize> = ds.samples.iter().map(|s| s.label).collect();
            let trained = train(&cfg, &alphabet, &texts, &labels, |e, l| {
                eprintln!("epoch {:>3}  loss {l:.4}", e + 1)
            })?;
            let digest = Checkpoint::from(trained).write(&out)?;
            println!("{digest}");
        }
        Command::Index {
            catalog,
            checkpoint,
            out,
        } => {
            let catalog = catalog.load(&alphabet)?;
            let (ckpt, digest) = Checkpoint::read(&checkpoint)?;
            let index = build_index(&ckpt.params, &digest, &catalog, &alphabet)?;
            write_file(&out, &index.save()?)?;
            println!("{}", index.digest()?);
        }
        Command::Eval {
            catalog,
            checkpoint,
            index,
            validation,
        } => {
            let catalog = catalog.load(&alphabet)?;
            let (ckpt, digest) = Checkpoint::read(&checkpoint)?;
            let index = EmbeddingIndex::load(&fs::read(&index)?, &digest)?;
            if index.catalog_digest() != catalog.digest() {
                bail!("index was built for a different catalog");
            }
            let validation = match validation {
                Some(p) => ValidationSet::read(File::open(p)?, &catalog, &alphabet)?,
                None => ValidationSet::held_out(
                    &catalog,
                    &fixtures::holdout_stats(&alphabet, DEFAULT_BINS)?,
                    fixtures::VALIDATION_PER_CLASS,
                    fixtures::VALIDATION_EDITS,
                    fixtures::VALIDATION_SEED,
                )?,
            };
            let predictor = NeuralPredictor {
                params: &ckpt.params,
                index: &index,
                alphabet: &alphabet,
            };
            let acc = evaluate(&predictor, &validation)?;
            println!("accuracy {:.4} on {} queries", acc, validation.len());
        }
        Command::Matrix {
            catalog_size,
            samples_per_class,
            seeds,
            full,
            out,
        } => {
            let exp =
                fixtures::desk_experiment(catalog_size, model_config(&file, catalog_size, seed))?;
            let ids: Vec<String> = exp.datasets.keys().cloned().collect();
            let mut strategies = vec![Strategy::Uniform];
            strategies.extend(ids.iter().map(|d| Strategy::Real { dataset: d.clone() }));
            if full {
                strategies.push(Strategy::Qwerty);
                let w = 1.0 / ids.len() as f64;
                strategies.push(Strategy::Fusion {
                    weights: ids.iter().map(|d| (d.clone(), w)).collect(),
                });
            }
            let mut specs: Vec<RowSpec> = strategies
                .iter()
                .flat_map(|s| {
                    seeds
                        .iter()
                        .map(move |&seed| RowSpec::new(s.clone(), samples_per_class, seed))
                })
                .collect();
            if full {
                for d in &ids {
                    for &seed in &seeds {
                        let mut spec = RowSpec::new(
                            Strategy::Real { dataset: d.clone() },
                            samples_per_class,
                            seed,
                        );
                        spec.keep_duplicate = false;
                        specs.push(spec);
                    }
                }
            }
            let english = FrequencyDictionary::bundled_english(&alphabet)?;
            let enhanced = english.enhance_with_catalog(&exp.catalog, &alphabet)?;
            let report = exp.run_matrix_with(&specs, &[&english, &enhanced], 2, |row| {
                eprintln!("{:<48} {:?}", row.label, row.accuracy)
            });
            print!("{}", report.render_table());
            if let Some(out) = out {
                write_file(&out, &report.to_json()?)?;
            }
        }
        Command::Sweep {
            catalog_size,
            samples,
            seeds,
            strategy,
            out,
        } => {
            let exp =
                fixtures::desk_experiment(catalog_size, model_config(&file, catalog_size, seed))?;
            let points = exp.sample_size_sweep(&strategy_named(&strategy), &samples, &seeds)?;
            for p in &points {
                println!(
                    "N={:<4} mean {:.4}  {:?}",
                    p.samples_per_class, p.mean_accuracy, p.accuracies
                );
            }
            if let Some(out) = out {
                write_file(&out, &serde_json::to_vec_pretty(&points)?)?;
            }
        }
        Command::Serve {
            checkpoint,
            index,
            host,
            port,
        } => {
            let mut cfg = file.service.clone();
            if let Some(c) = checkpoint {
                cfg.checkpoint = c;
            }
            if let Some(i) = index {
                cfg.index = i;
            }
            if let Some(h) = host {
                cfg.host = h;
            }
            cfg.apply_env()?;
            if let Some(p) = port {
                cfg.port = p;
            }
            cfg.validate()?;
            tokio::runtime::Runtime::new()?.block_on(service::serve(cfg))?;
        }
        Command::Bench {
            url,
            catalog,
            concurrency,
            requests,
            k,
        } => {
            let catalog = catalog.load(&alphabet)?;
            let holdout = fixtures::holdout_stats(&alphabet, DEFAULT_BINS)?;
            let queries = ValidationSet::held_out(&catalog, &holdout, 2, 1, seed)?.queries;
            let report = tokio::runtime::Runtime::new()?.block_on(measure_latency(
                &url,
                &queries,
                requests,
                concurrency,
                k,
            ))?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}
