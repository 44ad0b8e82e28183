//! JSON experiment configuration. Every section is optional; each subcommand requires the
//! sections it reads. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use entangle_core::attacks::AttackConfig;
use entangle_core::dataio::LabelMode;
use entangle_core::dknn::DknnConfig;
use entangle_core::mlp::{MeasureMode, MetricPolicy, ObjectiveSpec, Schedule};
use entangle_core::pointlab::PointOptConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub toy: Option<ToyConfig>,
    #[serde(default)]
    pub dataset: Option<DatasetConfig>,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub objective: Option<ObjectiveSpec>,
    #[serde(default)]
    pub schedule: Option<Schedule>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub measure: Option<MeasureConfig>,
    #[serde(default)]
    pub attack: Option<AttackSection>,
    #[serde(default)]
    pub dknn: Option<DknnSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobConfig {
    pub n: usize,
    pub classes: usize,
    #[serde(default = "one")]
    pub modes_per_class: usize,
    #[serde(default = "two")]
    pub dims: usize,
    #[serde(default = "unit")]
    pub stddev: f64,
    pub label_mode: LabelMode,
}

fn one() -> usize {
    1
}

fn two() -> usize {
    2
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyRun {
    pub name: String,
    pub optimizer: PointOptConfig,
}

/// Point-optimization runs sharing one initial point set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyConfig {
    pub data: BlobConfig,
    pub runs: Vec<ToyRun>,
    #[serde(default = "one")]
    pub knn_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum DataSource {
    /// Procedurally rendered 28×28 digits.
    SyntheticDigits { n_train: usize, n_test: usize },
    /// A directory holding the four standard MNIST IDX files. Seeded subsets of the given
    /// sizes are drawn when sizes are present.
    Idx {
        dir: PathBuf,
        #[serde(default)]
        n_train: Option<usize>,
        #[serde(default)]
        n_test: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub source: DataSource,
    /// Last fraction of the train split held out for calibration and model selection.
    #[serde(default = "default_holdout")]
    pub holdout_fraction: f64,
}

fn default_holdout() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Hidden widths; input and output widths come from the dataset.
    pub hidden: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub alphas: Vec<f64>,
    /// Training steps per sweep run; the schedule's step count when absent.
    #[serde(default)]
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Holdout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureConfig {
    #[serde(default)]
    pub mode: MeasureMode,
    #[serde(default = "default_measure_batch")]
    pub batch: usize,
    #[serde(default = "default_measure_split")]
    pub split: Split,
    #[serde(default)]
    pub metric: MetricPolicy,
}

fn default_measure_batch() -> usize {
    128
}

fn default_measure_split() -> Split {
    Split::Test
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackMethod {
    Fgsm,
    Bim,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    pub method: AttackMethod,
    pub epsilons: Vec<f64>,
    #[serde(default = "default_attack_step")]
    pub step_size: f64,
    #[serde(default = "default_attack_steps")]
    pub steps: usize,
    #[serde(default)]
    pub targeted: Option<usize>,
    /// Leading test points attacked.
    #[serde(default = "default_attack_points")]
    pub points: usize,
}

fn default_attack_step() -> f64 {
    0.01
}

fn default_attack_steps() -> usize {
    100
}

fn default_attack_points() -> usize {
    1000
}

impl AttackSection {
    pub fn config_for(&self, epsilon: f64) -> AttackConfig {
        let base = match self.method {
            AttackMethod::Fgsm => AttackConfig::fgsm(epsilon),
            AttackMethod::Bim => AttackConfig::bim(epsilon, self.step_size, self.steps),
        };
        AttackConfig {
            targeted: self.targeted,
            ..base
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DknnSection {
    #[serde(default)]
    pub index: DknnConfig,
    /// Leading test points scored.
    #[serde(default = "default_attack_points")]
    pub points: usize,
    /// Also score shuffled-pixel copies of the test points as an out-of-distribution set.
    #[serde(default)]
    pub ood: bool,
    /// Credibility bins for the binned calibration curve.
    #[serde(default = "default_bins")]
    pub bins: usize,
}

fn default_bins() -> usize {
    10
}

impl ExperimentConfig {
    pub fn from_json(text: &str, origin: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| {
            CliError::Config(format!(
                "{origin}: line {} column {}: {e}",
                e.line(),
                e.column()
            ))
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form, hex encoded. The output directory is excluded so
    /// the same experiment hashes identically wherever it is written.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn require<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
        section
            .as_ref()
            .ok_or_else(|| CliError::Config(format!("config has no `{name}` section")))
    }
}
