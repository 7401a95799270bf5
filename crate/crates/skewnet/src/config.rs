//! Experiment configuration: one TOML document drives the whole pipeline.
//! An annotated example lives in `configs/botiot-mini.toml`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{DatasetSchema, SynthSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Variant {
    E1,
    E2,
    E3,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::E1 => "E1",
            Variant::E2 => "E2",
            Variant::E3 => "E3",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "E1" | "e1" => Ok(Variant::E1),
            "E2" | "e2" => Ok(Variant::E2),
            "E3" | "e3" => Ok(Variant::E3),
            other => Err(Error::Config(format!("unknown experiment variant '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// CSV source path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    /// Named synthetic preset; currently `botiot-mini`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth_preset: Option<String>,
    /// Inline synthetic benchmark spec.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SchemaConfig {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<String>>,
    #[serde(default)]
    pub drop: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_order: Option<Vec<String>>,
}

impl SchemaConfig {
    pub fn to_schema(&self) -> DatasetSchema {
        DatasetSchema {
            label: self.label.clone(),
            features: self.features.clone(),
            drop: self.drop.clone(),
            class_order: self.class_order.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    /// Per-class row caps; absent classes are kept whole.
    #[serde(default)]
    pub caps: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub train_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AeSection {
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for AeSection {
    fn default() -> Self {
        Self {
            latent_dim: 8,
            hidden: vec![64],
            epochs: 20,
            batch_size: 256,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct VaeSection {
    pub z_dim: usize,
    pub conv_channels: (usize, usize),
    pub kernel_len: usize,
    pub stride: usize,
    pub decoder_hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub min_rows: usize,
}

impl Default for VaeSection {
    fn default() -> Self {
        let d = crate::vae::VaeConfig::default();
        Self {
            z_dim: d.z_dim,
            conv_channels: d.conv_channels,
            kernel_len: d.kernel_len,
            stride: d.stride,
            decoder_hidden: d.decoder_hidden,
            epochs: d.epochs,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            min_rows: d.min_rows,
        }
    }
}

impl VaeSection {
    pub fn to_config(&self, seed: u64) -> crate::vae::VaeConfig {
        crate::vae::VaeConfig {
            z_dim: self.z_dim,
            conv_channels: self.conv_channels,
            kernel_len: self.kernel_len,
            stride: self.stride,
            decoder_hidden: self.decoder_hidden,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed,
            min_rows: self.min_rows,
        }
    }
}

/// One class's augmentation request. An absolute `count` takes precedence
/// over `fraction` when both are set.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    pub class: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AugmentSection {
    #[serde(default)]
    pub plans: Vec<PlanConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSection {
    pub initial: f64,
    pub decrease_step: f64,
    pub increase_step: f64,
    pub patience: usize,
    pub max_iterations: usize,
    /// Inner train fraction for the validation holdout.
    pub validation_fraction: f64,
    /// Optional cheaper epoch count for candidate training.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    /// Classes to search; defaults to the augmentation plan classes.
    #[serde(default)]
    pub minority: Vec<String>,
}

impl Default for SearchSection {
    fn default() -> Self {
        let d = crate::weight_search::WeightSearchConfig::default();
        Self {
            initial: d.initial,
            decrease_step: d.decrease_step,
            increase_step: d.increase_step,
            patience: d.patience,
            max_iterations: d.max_iterations,
            validation_fraction: 0.75,
            epochs: None,
            minority: Vec::new(),
        }
    }
}

impl SearchSection {
    pub fn to_config(&self) -> crate::weight_search::WeightSearchConfig {
        crate::weight_search::WeightSearchConfig {
            initial: self.initial,
            decrease_step: self.decrease_step,
            increase_step: self.increase_step,
            patience: self.patience,
            max_iterations: self.max_iterations,
            ..crate::weight_search::WeightSearchConfig::default()
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct WeightsSection {
    /// Class-name to weight map; absent classes default to 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explicit: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierSection {
    pub kind: String,
    pub hidden: [usize; 4],
    pub dropout: (f64, f64),
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub shuffle: bool,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        Self {
            kind: "DNN".into(),
            hidden: [128, 64, 32, 16],
            dropout: (0.30, 0.20),
            epochs: 30,
            batch_size: 256,
            learning_rate: 1e-3,
            shuffle: true,
        }
    }
}

impl ClassifierSection {
    pub fn arch_spec(
        &self,
        input_dim: usize,
        n_classes: usize,
    ) -> Result<crate::classifier::ArchitectureSpec> {
        Ok(crate::classifier::ArchitectureSpec {
            kind: crate::classifier::ArchKind::parse(&self.kind)?,
            input_dim,
            n_classes,
            hidden: self.hidden,
            dropout: self.dropout,
        })
    }

    pub fn train_config(&self, seed: u64) -> crate::classifier::TrainConfig {
        crate::classifier::TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed,
            shuffle: self.shuffle,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub variants: Vec<String>,
    pub self_check: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            variants: vec!["E1".into(), "E2".into(), "E3".into()],
            self_check: false,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub dataset: DatasetConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schema: Option<SchemaConfig>,
    pub sampling: SamplingConfig,
    pub split: SplitConfig,
    pub ae: AeSection,
    pub vae: VaeSection,
    pub augment: AugmentSection,
    pub weights: WeightsSection,
    pub classifier: ClassifierSection,
    pub experiment: ExperimentSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn variants(&self) -> Result<Vec<Variant>> {
        let mut out: Vec<Variant> = self
            .experiment
            .variants
            .iter()
            .map(|v| Variant::parse(v))
            .collect::<Result<_>>()?;
        out.sort();
        out.dedup();
        if out.is_empty() {
            return Err(Error::Config("no experiment variants requested".into()));
        }
        Ok(out)
    }

    /// Consistency checks that must hold before any work starts.
    pub fn validate(&self) -> Result<()> {
        let sources = [
            self.dataset.csv.is_some(),
            self.dataset.synth_preset.is_some(),
            self.dataset.synth.is_some(),
        ];
        match sources.iter().filter(|&&s| s).count() {
            0 => {
                return Err(Error::Config(
                    "dataset: set exactly one of csv, synth_preset, synth".into(),
                ))
            }
            1 => {}
            _ => {
                return Err(Error::Config(
                    "dataset: csv, synth_preset and synth are mutually exclusive".into(),
                ))
            }
        }
        if self.dataset.csv.is_some() && self.schema.is_none() {
            return Err(Error::Config("csv dataset requires a [schema] section".into()));
        }
        if let Some(preset) = &self.dataset.synth_preset {
            if preset != "botiot-mini" {
                return Err(Error::Config(format!("unknown synth preset '{preset}'")));
            }
        }
        if let Some(spec) = &self.dataset.synth {
            spec.validate()?;
        }
        let variants = self.variants()?;
        let needs_augment =
            variants.contains(&Variant::E2) || variants.contains(&Variant::E3);
        if needs_augment && self.augment.plans.is_empty() {
            return Err(Error::Config(
                "variants E2/E3 require [[augment.plans]] entries".into(),
            ));
        }
        for plan in &self.augment.plans {
            if plan.fraction.is_none() && plan.count.is_none() {
                return Err(Error::Config(format!(
                    "augment plan for '{}' needs a fraction or a count",
                    plan.class
                )));
            }
        }
        if variants.contains(&Variant::E3)
            && self.weights.explicit.is_none()
            && self.weights.search.is_none()
        {
            return Err(Error::Config(
                "variant E3 requires [weights] explicit map or search config".into(),
            ));
        }
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "split.train_fraction {} must lie in (0, 1)",
                self.split.train_fraction
            )));
        }
        Ok(())
    }

    /// Stable content hash for provenance lines.
    pub fn content_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serialization");
        let mut h = Sha256::new();
        h.update(canonical.as_bytes());
        let digest = h.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
