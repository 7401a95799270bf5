//! Command-line pipeline. Each subcommand wraps one library stage; the
//! `experiment` subcommand runs the whole protocol from a config file.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
//! error. All artifacts land under `--out` with fixed names.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::augment::{augment_dataset, AugmentationPlan};
use crate::autoencoder::{train_autoencoder, AutoencoderModel, ProjectorConfig};
use crate::classifier::{build_classifier, predict, train_classifier, ClassifierModel};
use crate::config::ExperimentConfig;
use crate::data::{
    clean, generate_synthetic_benchmark, load_csv, sample_per_class, save_csv, stratified_split,
    synth, Dataset, DatasetSchema, Scaler,
};
use crate::error::{Error, Result};
use crate::experiment::{encode_dataset, run_experiment};
use crate::metrics::{confusion, per_class_metrics, ReportFormat};
use crate::nn::ClassWeights;
use crate::rng::RngStream;
use crate::vae::{train_vae, VaeModel};
use crate::weight_search::{search_class_weights, ClassifierWeightEvaluator};

#[derive(Parser)]
#[command(
    name = "skewnet",
    version,
    about = "Imbalance-aware traffic classification: capped VAE augmentation, latent projection, cost-sensitive training"
)]
pub struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "skewnet-out")]
    pub out: PathBuf,
    /// Report rendering: table or machine.
    #[arg(long, global = true, default_value = "table")]
    pub format: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate the configured synthetic benchmark as dataset.csv.
    SynthData,
    /// Clean, subsample, split and scale a CSV into train.csv / test.csv.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
    },
    /// Train the latent projector on a (scaled) training CSV.
    TrainAe {
        #[arg(long)]
        train: PathBuf,
    },
    /// Project a CSV through a trained autoencoder.
    Encode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Output file name under --out.
        #[arg(long, default_value = "encoded.csv")]
        output: String,
    },
    /// Train one minority-class generator on a (scaled) training CSV.
    TrainVae {
        #[arg(long)]
        train: PathBuf,
        /// Class name to model.
        #[arg(long)]
        class: String,
    },
    /// Append capped synthetic rows per the configured plans.
    Augment {
        #[arg(long)]
        train: PathBuf,
        /// Directory holding vae_<class>.ckpt files; defaults to --out.
        #[arg(long)]
        vae_dir: Option<PathBuf>,
    },
    /// Run the iterative class-weight search.
    SearchWeights {
        #[arg(long)]
        train: PathBuf,
        /// Optional held-out validation CSV; otherwise an inner split is used.
        #[arg(long)]
        validation: Option<PathBuf>,
    },
    /// Train a classifier on a CSV with the configured weights.
    Train {
        #[arg(long)]
        train: PathBuf,
    },
    /// Evaluate a trained classifier checkpoint on a test CSV.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Run the full E1/E2/E3 protocol from the config.
    Experiment {
        /// Assert test-split hygiene across variants.
        #[arg(long)]
        self_check: bool,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn schema_from(cfg: &ExperimentConfig) -> DatasetSchema {
    cfg.schema
        .as_ref()
        .map(|s| s.to_schema())
        .unwrap_or_else(|| DatasetSchema::new("label"))
}

fn load_dataset(path: &Path, schema: &DatasetSchema) -> Result<Dataset> {
    let outcome = load_csv(path, schema)?;
    if !outcome.rejects.is_empty() {
        eprintln!(
            "{}: rejected {} rows",
            path.display(),
            outcome.rejects.len()
        );
    }
    Ok(outcome.dataset)
}

fn synth_spec(cfg: &ExperimentConfig, root: &RngStream) -> Result<synth::SynthSpec> {
    let mut spec = if let Some(preset) = &cfg.dataset.synth_preset {
        match preset.as_str() {
            "botiot-mini" => synth::botiot_mini(0),
            other => return Err(Error::Config(format!("unknown synth preset '{other}'"))),
        }
    } else if let Some(spec) = &cfg.dataset.synth {
        spec.clone()
    } else {
        return Err(Error::Config(
            "synth-data needs [dataset] synth_preset or synth spec".into(),
        ));
    };
    spec.seed = root.fork("synth").seed();
    Ok(spec)
}

pub fn run() -> Result<()> {
    let cli = Cli::parse();
    execute(&cli)
}

pub fn execute(cli: &Cli) -> Result<()> {
    let format = ReportFormat::parse(&cli.format)?;
    let cfg = load_config(cli)?;
    let out = &cli.out;
    std::fs::create_dir_all(out)?;
    let root = RngStream::new(cfg.seed);
    match &cli.command {
        Command::SynthData => {
            let spec = synth_spec(&cfg, &root)?;
            let ds = generate_synthetic_benchmark(&spec)?;
            let path = out.join("dataset.csv");
            save_csv(&path, &ds, "label")?;
            println!("wrote {} rows to {}", ds.n_rows(), path.display());
        }
        Command::Preprocess { input } => {
            let schema = schema_from(&cfg);
            let outcome = load_csv(input, &schema)?;
            std::fs::write(out.join("rejects.log"), outcome.reject_log())?;
            let cleaned = clean(&outcome.dataset, &schema);
            let sampled = if cfg.sampling.caps.is_empty() {
                cleaned
            } else {
                sample_per_class(&cleaned, &cfg.sampling.caps, root.fork("sample").seed())?
            };
            let (train, test) =
                stratified_split(&sampled, cfg.split.train_fraction, root.fork("split").seed())?;
            let scaler = Scaler::fit(&train.features)?;
            let train_scaled = Dataset::new(
                scaler.apply(&train.features)?,
                train.labels.clone(),
                train.classes.clone(),
                train.feature_names.clone(),
            )?;
            let test_scaled = Dataset::new(
                scaler.apply(&test.features)?,
                test.labels.clone(),
                test.classes.clone(),
                test.feature_names.clone(),
            )?;
            scaler.save(&out.join("scaler.json"))?;
            save_csv(&out.join("train.csv"), &train_scaled, &schema.label)?;
            save_csv(&out.join("test.csv"), &test_scaled, &schema.label)?;
            println!(
                "train {} rows, test {} rows, {} rejected",
                train_scaled.n_rows(),
                test_scaled.n_rows(),
                outcome.rejects.len()
            );
        }
        Command::TrainAe { train } => {
            let schema = schema_from(&cfg);
            let ds = load_dataset(train, &schema)?;
            let ae_cfg = ProjectorConfig {
                latent_dim: cfg.ae.latent_dim,
                hidden: cfg.ae.hidden.clone(),
                epochs: cfg.ae.epochs,
                batch_size: cfg.ae.batch_size,
                learning_rate: cfg.ae.learning_rate,
                seed: root.fork("ae").seed(),
            };
            let mut model = train_autoencoder(&ds.features, &ae_cfg)?;
            let err = crate::autoencoder::reconstruction_error(&model, &ds.features)?;
            let path = out.join("ae.ckpt");
            model.save(&path)?;
            println!("wrote {} (reconstruction mse {err})", path.display());
        }
        Command::Encode {
            model,
            input,
            output,
        } => {
            let ae = AutoencoderModel::load(model)?;
            let schema = schema_from(&cfg);
            let ds = load_dataset(input, &schema)?;
            let encoded = encode_dataset(&ae, &ds)?;
            let path = out.join(output);
            save_csv(&path, &encoded, &schema.label)?;
            println!("wrote {} rows to {}", encoded.n_rows(), path.display());
        }
        Command::TrainVae { train, class } => {
            let schema = schema_from(&cfg);
            let ds = load_dataset(train, &schema)?;
            let class_idx = ds
                .class_index(class)
                .ok_or_else(|| Error::Config(format!("unknown class '{class}'")))?;
            let rows: Vec<usize> = (0..ds.n_rows())
                .filter(|&i| ds.labels[i] == class_idx)
                .collect();
            let class_rows = ds.subset(&rows);
            let vae_cfg = cfg.vae.to_config(root.fork(&format!("vae/{class}")).seed());
            let mut model = train_vae(&class_rows.features, &vae_cfg)?;
            let path = out.join(format!("vae_{class}.ckpt"));
            model.save(&path)?;
            println!(
                "wrote {} (trained on {} rows)",
                path.display(),
                class_rows.n_rows()
            );
        }
        Command::Augment { train, vae_dir } => {
            let schema = schema_from(&cfg);
            let ds = load_dataset(train, &schema)?;
            if cfg.augment.plans.is_empty() {
                return Err(Error::Config("no [[augment.plans]] configured".into()));
            }
            let counts = ds.class_counts();
            let dir = vae_dir.as_deref().unwrap_or(out);
            let mut plans = Vec::new();
            let mut vaes: BTreeMap<usize, VaeModel> = BTreeMap::new();
            for plan in &cfg.augment.plans {
                let class = ds.class_index(&plan.class).ok_or_else(|| {
                    Error::Config(format!("augment plan for unknown class '{}'", plan.class))
                })?;
                let resolved = match (plan.count, plan.fraction) {
                    (Some(count), _) => AugmentationPlan::new(class, counts[class], count)?,
                    (None, Some(fraction)) => {
                        AugmentationPlan::from_fraction(class, counts[class], fraction)?
                    }
                    (None, None) => {
                        return Err(Error::Config(format!(
                            "augment plan for '{}' needs a fraction or a count",
                            plan.class
                        )))
                    }
                };
                let ckpt = dir.join(format!("vae_{}.ckpt", plan.class));
                vaes.insert(class, VaeModel::load(&ckpt)?);
                plans.push(resolved);
            }
            let augmented = augment_dataset(&ds, &plans, &vaes, &root.fork("augment"))?;
            let path = out.join("augmented.csv");
            save_csv(&path, &augmented, &schema.label)?;
            println!(
                "wrote {} rows ({} synthetic) to {}",
                augmented.n_rows(),
                augmented.n_rows() - ds.n_rows(),
                path.display()
            );
        }
        Command::SearchWeights { train, validation } => {
            let schema = schema_from(&cfg);
            let train_ds = load_dataset(train, &schema)?;
            let section = cfg.weights.search.clone().unwrap_or_default();
            let (inner_train, inner_val) = match validation {
                Some(path) => {
                    let val = load_dataset(path, &schema)?.relabel_to(&train_ds.classes)?;
                    (train_ds.clone(), val)
                }
                None => stratified_split(
                    &train_ds,
                    section.validation_fraction,
                    root.fork("wsearch/split").seed(),
                )?,
            };
            let minority_names: Vec<String> = if section.minority.is_empty() {
                cfg.augment.plans.iter().map(|p| p.class.clone()).collect()
            } else {
                section.minority.clone()
            };
            if minority_names.is_empty() {
                return Err(Error::Config(
                    "search needs [weights.search] minority classes or augment plans".into(),
                ));
            }
            let minority: Vec<usize> = minority_names
                .iter()
                .map(|name| {
                    train_ds
                        .class_index(name)
                        .ok_or_else(|| Error::Config(format!("minority class '{name}' unknown")))
                })
                .collect::<Result<_>>()?;
            let mut train_cfg = cfg
                .classifier
                .train_config(root.fork("wsearch/train").seed());
            if let Some(epochs) = section.epochs {
                train_cfg.epochs = epochs;
            }
            let mut evaluator = ClassifierWeightEvaluator {
                train: &inner_train,
                validation: &inner_val,
                arch: cfg
                    .classifier
                    .arch_spec(train_ds.width(), train_ds.class_count())?,
                train_config: train_cfg,
                init_seed: root.fork("wsearch/init").seed(),
            };
            let (weights, trace) = search_class_weights(
                &train_ds,
                &minority,
                &section.to_config(),
                &mut evaluator,
            )?;
            let map: BTreeMap<String, f64> = train_ds
                .classes
                .iter()
                .enumerate()
                .map(|(i, name)| (name.clone(), weights.get(i)))
                .collect();
            #[derive(Serialize)]
            struct Explicit {
                explicit: BTreeMap<String, f64>,
            }
            #[derive(Serialize)]
            struct WeightsFile {
                weights: Explicit,
            }
            let text = toml::to_string(&WeightsFile {
                weights: Explicit { explicit: map },
            })
            .map_err(|e| Error::Data(format!("weights serialize: {e}")))?;
            std::fs::write(out.join("weights.toml"), &text)?;
            std::fs::write(out.join("search_trace.json"), trace_json(&trace))?;
            println!("{text}");
            println!(
                "evaluated {} candidates (baseline included){}",
                trace.iterations.len(),
                if trace.truncated { ", truncated" } else { "" }
            );
        }
        Command::Train { train } => {
            let schema = schema_from(&cfg);
            let ds = load_dataset(train, &schema)?;
            let arch = cfg.classifier.arch_spec(ds.width(), ds.class_count())?;
            let weights = match &cfg.weights.explicit {
                Some(map) => {
                    let mut w = vec![1.0; ds.class_count()];
                    for (name, &value) in map {
                        let class = ds.class_index(name).ok_or_else(|| {
                            Error::Config(format!("weight for unknown class '{name}'"))
                        })?;
                        w[class] = value;
                    }
                    ClassWeights::new(w)?
                }
                None => ClassWeights::unit(ds.class_count()),
            };
            let mut model = build_classifier(&arch, &mut root.fork("init/cli"))?;
            let train_cfg = cfg.classifier.train_config(root.fork("train/cli").seed());
            let history = train_classifier(&mut model, &ds, &weights, &train_cfg, None)?;
            let path = out.join("model.ckpt");
            model.save(&path)?;
            #[derive(Serialize)]
            struct HistoryFile<'a> {
                train_loss: &'a [f64],
            }
            std::fs::write(
                out.join("history.json"),
                serde_json::to_string_pretty(&HistoryFile {
                    train_loss: &history.train_loss,
                })
                .expect("history serialization")
                    + "\n",
            )?;
            println!(
                "wrote {} (final train loss {})",
                path.display(),
                history.train_loss.last().unwrap()
            );
        }
        Command::Evaluate { model, test } => {
            let classifier = ClassifierModel::load(model)?;
            let schema = schema_from(&cfg);
            let ds = load_dataset(test, &schema)?;
            let ds = if classifier.classes.is_empty() {
                ds
            } else {
                ds.relabel_to(&classifier.classes)?
            };
            let (_, labels) = predict(&classifier, &ds.features)?;
            let cm = confusion(&ds.labels, &labels, ds.class_count())?;
            let report = per_class_metrics(&cm, &ds.classes)?;
            std::fs::write(out.join("report.json"), report.emit(ReportFormat::Machine))?;
            std::fs::write(out.join("report.txt"), report.emit(ReportFormat::Table))?;
            print!("{}", report.emit(format));
        }
        Command::Experiment { self_check } => {
            let mut cfg = cfg;
            if *self_check {
                cfg.experiment.self_check = true;
            }
            let result = run_experiment(&cfg, Some(out))?;
            for outcome in &result.variants {
                println!("== {} ==", outcome.variant);
                print!("{}", outcome.report.emit(format));
                if let Some(weights) = &outcome.weights {
                    let rendered: Vec<String> = weights
                        .iter()
                        .map(|(name, w)| format!("{name}:{w}"))
                        .collect();
                    println!("weights {{{}}}", rendered.join(", "));
                }
            }
            if let Some(check) = &result.self_check {
                println!(
                    "self-check: consistent={} test_rows={} synthetic_rows={} overlap={}",
                    check.consistent, check.test_rows, check.synthetic_rows, check.synthetic_overlap
                );
            }
            println!("result written to {}", out.join("result.json").display());
        }
    }
    Ok(())
}

fn trace_json(trace: &crate::weight_search::SearchTrace) -> String {
    #[derive(Serialize)]
    struct Row<'a> {
        weights: &'a [f64],
        score: f64,
    }
    #[derive(Serialize)]
    struct Out<'a> {
        truncated: bool,
        iterations: Vec<Row<'a>>,
    }
    serde_json::to_string_pretty(&Out {
        truncated: trace.truncated,
        iterations: trace
            .iterations
            .iter()
            .map(|it| Row {
                weights: &it.weights,
                score: it.score,
            })
            .collect(),
    })
    .expect("trace serialization")
        + "\n"
}
