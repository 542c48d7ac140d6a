//! Run configuration (TOML) and reproducibility manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cohort::{AgeMode, CharlsonWeightTable, FeatureOptions, SequenceConfig};
use crate::error::{Error, Result};
use crate::eval::SplitPlan;
use crate::lace::{BaselineOptions, LogisticConfig};
use crate::lstm::TrainConfig;
use crate::synthetic::CohortSpec;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "READMIT_OUT_DIR";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    LaceLr,
    Lstm,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::LaceLr => "lace-lr",
            ModelKind::Lstm => "lstm",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    /// Fit on every registry feature instead of the four LACE components.
    pub extended: bool,
    pub logistic: LogisticConfig,
}

impl BaselineSection {
    pub fn options(&self, features: &FeatureOptions) -> BaselineOptions {
        BaselineOptions { extended: self.extended, features: features.clone(), logistic: self.logistic }
    }
}

/// A named feature layout for the ablation matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    #[serde(default)]
    pub age_mode: AgeMode,
    #[serde(default)]
    pub exclude: Vec<String>,
}

impl Variant {
    pub fn new(name: &str, age_mode: AgeMode, exclude: &[&str]) -> Self {
        Self { name: name.into(), age_mode, exclude: exclude.iter().map(|s| s.to_string()).collect() }
    }

    pub fn features(&self) -> FeatureOptions {
        FeatureOptions { age_mode: self.age_mode, exclude: self.exclude.clone() }
    }

    /// Full layout plus the age/surgery ablations.
    pub fn default_matrix() -> Vec<Variant> {
        vec![
            Variant::new("full", AgeMode::Raw, &[]),
            Variant::new("drop_age", AgeMode::Raw, &["age"]),
            Variant::new("drop_surgery", AgeMode::Raw, &["surgery"]),
            Variant::new("drop_age_surgery", AgeMode::Raw, &["age", "surgery"]),
            Variant::new("bucket_age", AgeMode::Bucketed, &[]),
            Variant::new("bucket_age_drop_surgery", AgeMode::Bucketed, &["surgery"]),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub models: Vec<ModelKind>,
    /// Also run the variant matrix.
    pub ablation: bool,
    pub ablation_model: ModelKind,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self { models: vec![ModelKind::LaceLr, ModelKind::Lstm], ablation: false, ablation_model: ModelKind::Lstm }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ShapModeChoice {
    /// Exact when the attributed features fit the exact limit, else Monte Carlo.
    #[default]
    Auto,
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    pub seed: u64,
    /// Shuffles per feature for permutation importance.
    pub n_repeats: usize,
    pub background_size: usize,
    pub mode: ShapModeChoice,
    pub n_samples: usize,
    pub max_instances: usize,
    /// Restrict attribution to these features; empty means all.
    pub features: Vec<String>,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_repeats: 10,
            background_size: 100,
            mode: ShapModeChoice::Auto,
            n_samples: 2000,
            max_instances: 10,
            features: Vec::new(),
        }
    }
}

/// Everything a run needs. Every section is optional in the file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// When set, seeds the cohort, training, split plan and explainers.
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub charlson_weights: Option<PathBuf>,
    pub cohort: CohortSpec,
    pub features: FeatureOptions,
    pub baseline: BaselineSection,
    pub sequence: SequenceConfig,
    pub train: TrainConfig,
    pub split: SplitPlan,
    pub evaluate: EvaluateSection,
    pub explain: ExplainConfig,
    pub variants: Vec<Variant>,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&read_config_file(path)?).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Applies the global seed to every seeded section.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self.cohort.seed = seed;
        self.train.seed = seed;
        self.split.seed = seed;
        self.explain.seed = seed;
        self
    }

    pub fn charlson_table(&self) -> Result<CharlsonWeightTable> {
        match &self.charlson_weights {
            Some(p) => CharlsonWeightTable::from_toml_str(&read_config_file(p)?),
            None => Ok(CharlsonWeightTable::shipped()),
        }
    }

    /// Output directory: explicit flag, then config, then environment, then `.`.
    pub fn output_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.output_dir.clone())
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }
}

/// Reads a configuration-type file; failures are config errors naming the path.
pub fn read_config_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::File { path: path.to_path_buf(), source: e })?;
        Ok(Self { path: path.to_path_buf(), sha256: sha256_hex(&bytes) })
    }
}

/// Written next to every artifact: the fully resolved invocation plus the
/// digests of what it read and wrote. Contains no timestamps, so reruns
/// reproduce it byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest<I> {
    pub schema_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub invocation: I,
    /// SHA-256 of the invocation's JSON encoding.
    pub config_sha256: String,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}
