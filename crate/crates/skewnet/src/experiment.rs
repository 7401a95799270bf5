//! End-to-end experiment runner.
//!
//! One run shares its preprocessing across variants: clean, per-class
//! sampling, stratified split, train-fitted scaling, and one autoencoder
//! trained on the unaugmented train split. Variants then differ only in
//! what the classifier sees:
//!
//!   E1  latent train split, unit weights
//!   E2  E1 plus capped VAE augmentation of the train split (pre-encoding)
//!   E3  E2 plus class weights (explicit or searched)
//!
//! The test split is never augmented and never used to fit the scaler, the
//! autoencoder, or any VAE. Every stage draws from a label-forked stream,
//! so a variant's outcome does not depend on which other variants run.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{augment_dataset, AugmentationPlan};
use crate::autoencoder::{train_autoencoder, AutoencoderModel, ProjectorConfig};
use crate::classifier::{build_classifier, predict, train_classifier, ClassifierModel};
use crate::config::{ExperimentConfig, Variant};
use crate::data::{
    clean, generate_synthetic_benchmark, load_csv, sample_per_class, stratified_split, synth,
    Dataset, Scaler,
};
use crate::error::{Error, Result};
use crate::metrics::{confusion, per_class_metrics, MetricsReport, ReportFormat};
use crate::nn::ClassWeights;
use crate::rng::RngStream;
use crate::vae::{train_vae, VaeModel};
use crate::weight_search::{search_class_weights, ClassifierWeightEvaluator, SearchTrace};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VariantOutcome {
    pub variant: String,
    pub report: MetricsReport,
    /// Class weights used for training, by name (E3 only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<BTreeMap<String, f64>>,
    /// Checkpoint file name under the output directory, when persisted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
    /// Digest of the test rows this variant was evaluated on.
    pub test_digest: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SelfCheckReport {
    pub consistent: bool,
    pub test_rows: usize,
    pub synthetic_rows: usize,
    pub synthetic_overlap: usize,
    pub test_digest: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExperimentResult {
    pub seed: u64,
    pub config_hash: String,
    pub variants: Vec<VariantOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub self_check: Option<SelfCheckReport>,
}

impl ExperimentResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serialization") + "\n"
    }

    pub fn outcome(&self, variant: Variant) -> Option<&VariantOutcome> {
        self.variants.iter().find(|v| v.variant == variant.name())
    }
}

/// Projects a dataset through the encoder, renaming features to `z*`.
pub fn encode_dataset(ae: &AutoencoderModel, ds: &Dataset) -> Result<Dataset> {
    let latent = ae.encode(&ds.features)?;
    let names = (0..latent.cols()).map(|j| format!("z{j}")).collect();
    Dataset::new(latent, ds.labels.clone(), ds.classes.clone(), names)
}

/// Order-independent digest of a dataset's row hashes.
fn dataset_digest(rows: &[[u8; 32]]) -> String {
    let mut sorted: Vec<[u8; 32]> = rows.to_vec();
    sorted.sort_unstable();
    let mut h = Sha256::new();
    for row in &sorted {
        h.update(row);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Resolves plan configs against the train split's actual class counts.
/// Absolute counts take precedence over fractions.
fn resolve_plans(cfg: &ExperimentConfig, train: &Dataset) -> Result<Vec<AugmentationPlan>> {
    let counts = train.class_counts();
    let mut plans = Vec::with_capacity(cfg.augment.plans.len());
    for plan in &cfg.augment.plans {
        let class = train
            .class_index(&plan.class)
            .ok_or_else(|| Error::Config(format!("augment plan for unknown class '{}'", plan.class)))?;
        let available = counts[class];
        let plan = match (plan.count, plan.fraction) {
            (Some(count), _) => AugmentationPlan::new(class, available, count)?,
            (None, Some(fraction)) => AugmentationPlan::from_fraction(class, available, fraction)?,
            (None, None) => {
                return Err(Error::Config(format!(
                    "augment plan for '{}' needs a fraction or a count",
                    plan.class
                )))
            }
        };
        plans.push(plan);
    }
    Ok(plans)
}

fn load_base_dataset(cfg: &ExperimentConfig, root: &RngStream, out_dir: Option<&Path>) -> Result<Dataset> {
    if let Some(path) = &cfg.dataset.csv {
        let schema = cfg
            .schema
            .as_ref()
            .ok_or_else(|| Error::Config("csv dataset requires a schema".into()))?
            .to_schema();
        let outcome = load_csv(Path::new(path), &schema)?;
        if let Some(dir) = out_dir {
            std::fs::write(dir.join("rejects.log"), outcome.reject_log())?;
        }
        return Ok(clean(&outcome.dataset, &schema));
    }
    let mut spec = if let Some(preset) = &cfg.dataset.synth_preset {
        match preset.as_str() {
            "botiot-mini" => synth::botiot_mini(0),
            other => return Err(Error::Config(format!("unknown synth preset '{other}'"))),
        }
    } else if let Some(spec) = &cfg.dataset.synth {
        spec.clone()
    } else {
        return Err(Error::Config("no dataset source configured".into()));
    };
    // The run seed governs generation so whole runs replay exactly.
    spec.seed = root.fork("synth").seed();
    generate_synthetic_benchmark(&spec)
}

struct Stage {
    train: Dataset,
    test: Dataset,
    ae: AutoencoderModel,
    augmented: Option<Dataset>,
    synthetic_hashes: Vec<[u8; 32]>,
}

fn prepare_stage(
    cfg: &ExperimentConfig,
    variants: &[Variant],
    root: &RngStream,
    out_dir: Option<&Path>,
) -> Result<Stage> {
    let base = load_base_dataset(cfg, root, out_dir)?;
    let sampled = if cfg.sampling.caps.is_empty() {
        base
    } else {
        sample_per_class(&base, &cfg.sampling.caps, root.fork("sample").seed())?
    };
    let (raw_train, raw_test) =
        stratified_split(&sampled, cfg.split.train_fraction, root.fork("split").seed())?;
    let scaler = Scaler::fit(&raw_train.features)?;
    let train = Dataset::new(
        scaler.apply(&raw_train.features)?,
        raw_train.labels.clone(),
        raw_train.classes.clone(),
        raw_train.feature_names.clone(),
    )?;
    let test = Dataset::new(
        scaler.apply(&raw_test.features)?,
        raw_test.labels.clone(),
        raw_test.classes.clone(),
        raw_test.feature_names.clone(),
    )?;
    if let Some(dir) = out_dir {
        scaler.save(&dir.join("scaler.json"))?;
    }

    let ae_cfg = ProjectorConfig {
        latent_dim: cfg.ae.latent_dim,
        hidden: cfg.ae.hidden.clone(),
        epochs: cfg.ae.epochs,
        batch_size: cfg.ae.batch_size,
        learning_rate: cfg.ae.learning_rate,
        seed: root.fork("ae").seed(),
    };
    let mut ae = train_autoencoder(&train.features, &ae_cfg)?;
    if let Some(dir) = out_dir {
        ae.save(&dir.join("ae.ckpt"))?;
    }

    let needs_augment =
        variants.contains(&Variant::E2) || variants.contains(&Variant::E3);
    let (augmented, synthetic_hashes) = if needs_augment {
        let plans = resolve_plans(cfg, &train)?;
        let mut vaes: BTreeMap<usize, VaeModel> = BTreeMap::new();
        for plan in &plans {
            let class_name = &train.classes[plan.class_index];
            let rows: Vec<usize> = (0..train.n_rows())
                .filter(|&i| train.labels[i] == plan.class_index)
                .collect();
            let class_rows = train.subset(&rows);
            let vae_cfg = cfg
                .vae
                .to_config(root.fork(&format!("vae/{class_name}")).seed());
            let mut vae = train_vae(&class_rows.features, &vae_cfg)?;
            if let Some(dir) = out_dir {
                vae.save(&dir.join(format!("vae_{class_name}.ckpt")))?;
            }
            vaes.insert(plan.class_index, vae);
        }
        let augmented = augment_dataset(&train, &plans, &vaes, &root.fork("augment"))?;
        let synthetic_hashes: Vec<[u8; 32]> = (train.n_rows()..augmented.n_rows())
            .map(|i| augmented.row_hash(i))
            .collect();
        (Some(augmented), synthetic_hashes)
    } else {
        (None, Vec::new())
    };

    Ok(Stage {
        train,
        test,
        ae,
        augmented,
        synthetic_hashes,
    })
}

fn weights_by_name(weights: &ClassWeights, classes: &[String]) -> BTreeMap<String, f64> {
    classes
        .iter()
        .enumerate()
        .map(|(i, name)| (name.clone(), weights.get(i)))
        .collect()
}

fn resolve_e3_weights(
    cfg: &ExperimentConfig,
    enc_aug: &Dataset,
    root: &RngStream,
    out_dir: Option<&Path>,
) -> Result<ClassWeights> {
    if let Some(map) = &cfg.weights.explicit {
        let mut weights = vec![1.0; enc_aug.class_count()];
        for (name, &w) in map {
            let class = enc_aug
                .class_index(name)
                .ok_or_else(|| Error::Config(format!("weight for unknown class '{name}'")))?;
            weights[class] = w;
        }
        return ClassWeights::new(weights);
    }
    let section = cfg
        .weights
        .search
        .as_ref()
        .ok_or_else(|| Error::Config("E3 requires explicit weights or a search config".into()))?;
    let (inner_train, inner_val) = stratified_split(
        enc_aug,
        section.validation_fraction,
        root.fork("wsearch/split").seed(),
    )?;
    let minority_names: Vec<String> = if section.minority.is_empty() {
        cfg.augment.plans.iter().map(|p| p.class.clone()).collect()
    } else {
        section.minority.clone()
    };
    let minority: Vec<usize> = minority_names
        .iter()
        .map(|name| {
            enc_aug
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
            .arch_spec(enc_aug.width(), enc_aug.class_count())?,
        train_config: train_cfg,
        init_seed: root.fork("wsearch/init").seed(),
    };
    let (weights, trace) =
        search_class_weights(enc_aug, &minority, &section.to_config(), &mut evaluator)?;
    if let Some(dir) = out_dir {
        std::fs::write(dir.join("search_trace.json"), trace_json(&trace))?;
    }
    Ok(weights)
}

fn trace_json(trace: &SearchTrace) -> String {
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

fn evaluate_variant(
    model: &ClassifierModel,
    enc_test: &Dataset,
) -> Result<MetricsReport> {
    let (_, labels) = predict(model, &enc_test.features)?;
    let cm = confusion(&enc_test.labels, &labels, enc_test.class_count())?;
    per_class_metrics(&cm, &enc_test.classes)
}

pub fn run_experiment(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<ExperimentResult> {
    cfg.validate()?;
    let variants = cfg.variants()?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let root = RngStream::new(cfg.seed);
    let stage = prepare_stage(cfg, &variants, &root, out_dir)?;

    let enc_train = encode_dataset(&stage.ae, &stage.train)?;
    let enc_test = encode_dataset(&stage.ae, &stage.test)?;
    let enc_aug = match &stage.augmented {
        Some(aug) => Some(encode_dataset(&stage.ae, aug)?),
        None => None,
    };
    let test_hashes = stage.test.row_hashes();
    let test_digest = dataset_digest(&test_hashes);

    let mut outcomes = Vec::with_capacity(variants.len());
    for variant in &variants {
        let (train_set, weights) = match variant {
            Variant::E1 => (&enc_train, ClassWeights::unit(enc_train.class_count())),
            Variant::E2 => (
                enc_aug.as_ref().expect("validated: E2 needs augmentation"),
                ClassWeights::unit(enc_train.class_count()),
            ),
            Variant::E3 => {
                let aug = enc_aug.as_ref().expect("validated: E3 needs augmentation");
                (aug, resolve_e3_weights(cfg, aug, &root, out_dir)?)
            }
        };
        let name = variant.name();
        let arch = cfg
            .classifier
            .arch_spec(train_set.width(), train_set.class_count())?;
        let mut init_rng = root.fork(&format!("init/{name}"));
        let mut model = build_classifier(&arch, &mut init_rng)?;
        let train_cfg = cfg
            .classifier
            .train_config(root.fork(&format!("train/{name}")).seed());
        train_classifier(&mut model, train_set, &weights, &train_cfg, None)?;
        let report = evaluate_variant(&model, &enc_test)?;
        let checkpoint = if let Some(dir) = out_dir {
            let file = format!("model_{}.ckpt", name.to_lowercase());
            model.save(&dir.join(&file))?;
            Some(file)
        } else {
            None
        };
        if let Some(dir) = out_dir {
            let stem = format!("report_{}", name.to_lowercase());
            std::fs::write(dir.join(format!("{stem}.json")), report.emit(ReportFormat::Machine))?;
            std::fs::write(dir.join(format!("{stem}.txt")), report.emit(ReportFormat::Table))?;
        }
        // Captured per variant from the test rows this model was scored on.
        let variant_test_digest = dataset_digest(&stage.test.row_hashes());
        outcomes.push(VariantOutcome {
            variant: name.to_string(),
            report,
            weights: if *variant == Variant::E3 {
                Some(weights_by_name(&weights, &enc_test.classes))
            } else {
                None
            },
            checkpoint,
            test_digest: variant_test_digest,
        });
    }

    let self_check = if cfg.experiment.self_check {
        let digests: Vec<&str> = outcomes.iter().map(|o| o.test_digest.as_str()).collect();
        let consistent_digests = digests.windows(2).all(|w| w[0] == w[1]);
        let test_set: std::collections::BTreeSet<[u8; 32]> =
            test_hashes.iter().copied().collect();
        let overlap = stage
            .synthetic_hashes
            .iter()
            .filter(|h| test_set.contains(*h))
            .count();
        let report = SelfCheckReport {
            consistent: consistent_digests && overlap == 0,
            test_rows: test_hashes.len(),
            synthetic_rows: stage.synthetic_hashes.len(),
            synthetic_overlap: overlap,
            test_digest: test_digest.clone(),
        };
        if !report.consistent {
            return Err(Error::Data(format!(
                "self-check failed: digests consistent = {consistent_digests}, synthetic overlap = {overlap}"
            )));
        }
        Some(report)
    } else {
        None
    };

    let result = ExperimentResult {
        seed: cfg.seed,
        config_hash: cfg.content_hash(),
        variants: outcomes,
        self_check,
    };
    if let Some(dir) = out_dir {
        std::fs::write(dir.join("result.json"), result.to_json())?;
    }
    Ok(result)
}
