//! JSON run configuration. Parsing fills every omitted field with its
//! default, so serializing the parsed value back out yields the effective
//! configuration that reproduces the run; that copy is frozen into each
//! output directory. Unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use ddian_core::data::{Family, SyntheticSpec};
use ddian_core::losses::HyperParams;
use ddian_core::model::ArchSpec;
use ddian_core::trainer::{LocalGate, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub hyper: HyperSection,
    #[serde(default)]
    pub train: TrainSection,
    pub output: PathBuf,
}

/// Either a synthetic generator spec or a CSV path, plus the held-out
/// target domain id.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    /// Declared class count for CSV validation; inferred when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
    pub target_domain: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    pub family: FamilyName,
    #[serde(default = "default_num_classes")]
    pub num_classes: usize,
    pub angles_deg: Vec<f64>,
    #[serde(default = "default_samples_per_class")]
    pub samples_per_class: usize,
    #[serde(default = "default_noise_sigma")]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_num_classes() -> usize {
    3
}

fn default_samples_per_class() -> usize {
    150
}

fn default_noise_sigma() -> f64 {
    0.25
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
pub enum FamilyName {
    #[serde(rename = "rotated-blobs")]
    RotatedBlobs,
    #[serde(rename = "rotated-moons")]
    RotatedMoons,
}

impl SyntheticSection {
    pub fn to_core(&self) -> SyntheticSpec {
        SyntheticSpec {
            family: match self.family {
                FamilyName::RotatedBlobs => Family::RotatedBlobs,
                FamilyName::RotatedMoons => Family::RotatedMoons,
            },
            num_classes: self.num_classes,
            angles_deg: self.angles_deg.clone(),
            samples_per_class: self.samples_per_class,
            noise_sigma: self.noise_sigma,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub f_hidden: Vec<usize>,
    pub feature_dim: usize,
    pub global_hidden: Vec<usize>,
    pub local_hidden: Vec<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        let spec = ArchSpec::default();
        ModelSection {
            f_hidden: spec.f_hidden,
            feature_dim: spec.feature_dim,
            global_hidden: spec.global_hidden,
            local_hidden: spec.local_hidden,
        }
    }
}

impl ModelSection {
    pub fn to_core(&self) -> ArchSpec {
        ArchSpec {
            f_hidden: self.f_hidden.clone(),
            feature_dim: self.feature_dim,
            global_hidden: self.global_hidden.clone(),
            local_hidden: self.local_hidden.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct HyperSection {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub phi: f64,
    pub batch_size: usize,
    pub momentum: f64,
    pub eta0: f64,
    pub epochs: usize,
}

impl Default for HyperSection {
    fn default() -> Self {
        let hp = HyperParams::default();
        HyperSection {
            alpha: hp.alpha,
            beta: hp.beta,
            gamma: hp.gamma,
            phi: hp.phi,
            batch_size: hp.batch_size,
            momentum: hp.momentum,
            eta0: hp.eta0,
            epochs: hp.epochs,
        }
    }
}

impl HyperSection {
    pub fn to_core(&self) -> HyperParams {
        HyperParams {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            phi: self.phi,
            batch_size: self.batch_size,
            momentum: self.momentum,
            eta0: self.eta0,
            epochs: self.epochs,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub use_global: bool,
    pub use_local: bool,
    pub use_discriminative: bool,
    pub local_gate: GateName,
    pub seed: u64,
    pub eval_every: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
pub enum GateName {
    #[serde(rename = "soft")]
    Soft,
    #[serde(rename = "hard")]
    Hard,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            use_global: true,
            use_local: true,
            use_discriminative: true,
            local_gate: GateName::Soft,
            seed: 0,
            eval_every: 5,
        }
    }
}

impl TrainSection {
    pub fn to_core(&self, hp: HyperParams) -> TrainConfig {
        TrainConfig {
            hp,
            use_global: self.use_global,
            use_local: self.use_local,
            use_discriminative: self.use_discriminative,
            local_gate: match self.local_gate {
                GateName::Soft => LocalGate::Soft,
                GateName::Hard => LocalGate::Hard,
            },
            seed: self.seed,
            eval_every: self.eval_every,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        match (&self.data.synthetic, &self.data.csv) {
            (Some(_), Some(_)) => Err(CliError::Config(
                "data section must give either `synthetic` or `csv`, not both".into(),
            )),
            (None, None) => Err(CliError::Config(
                "data section needs a `synthetic` spec or a `csv` path".into(),
            )),
            _ => Ok(()),
        }?;
        if let Some(synth) = &self.data.synthetic {
            synth.to_core().validate()?;
        }
        self.hyper.to_core().validate()?;
        self.train.to_core(self.hyper.to_core()).validate()?;
        Ok(())
    }

    /// Serializes the fully-resolved configuration (defaults included).
    pub fn effective_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("config serializes");
        text.push('\n');
        text
    }
}

pub fn load_synthetic_spec(path: &Path) -> Result<SyntheticSection, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let section: SyntheticSection = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    section.to_core().validate()?;
    Ok(section)
}
