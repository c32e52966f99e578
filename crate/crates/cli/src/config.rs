//! Per-command JSON documents. Relative paths resolve against the working
//! directory; unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mumic_core::data::io::DatasetFiles;
use mumic_core::data::SplitSpec;
use mumic_core::model::ModelConfig;
use mumic_core::trainer::{SweepPoint, TrainConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

/// Fails unless every path names an existing file.
pub fn require_files<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Result<()> {
    for p in paths {
        if !p.is_file() {
            bail!("input file {} does not exist", p.display());
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataPaths {
    pub labels: PathBuf,
    pub features: PathBuf,
    pub ground_truth: PathBuf,
}

impl Default for DataPaths {
    fn default() -> Self {
        Self {
            labels: "labels.csv".into(),
            features: "features.csv".into(),
            ground_truth: "ground_truth.jsonl".into(),
        }
    }
}

impl DataPaths {
    pub fn files(&self) -> DatasetFiles<&Path> {
        DatasetFiles {
            labels: &self.labels,
            features: &self.features,
            ground_truth: &self.ground_truth,
        }
    }

    pub fn all(&self) -> [&Path; 3] {
        [&self.labels, &self.features, &self.ground_truth]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConsolidateConfig {
    pub labels: PathBuf,
    pub features: PathBuf,
    pub annotations: PathBuf,
}

impl Default for ConsolidateConfig {
    fn default() -> Self {
        Self {
            labels: "labels.csv".into(),
            features: "features.csv".into(),
            annotations: "annotations.jsonl".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub data: DataPaths,
    pub ratios: SplitSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainRunConfig {
    pub data: DataPaths,
    /// Labels used for the gradient steps; the data's ground truth when
    /// absent. Validation always uses the ground truth.
    pub training_truth: Option<PathBuf>,
    pub split: PathBuf,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub histogram_bins: usize,
    /// Only read by `sweep`.
    pub grid: Vec<SweepPoint>,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        let learnable = |v| SweepPoint {
            logit_scale_init: v,
            frozen: false,
        };
        Self {
            data: DataPaths::default(),
            training_truth: None,
            split: "split.json".into(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            histogram_bins: 40,
            grid: vec![
                learnable(0.7),
                learnable(2.0),
                learnable(3.652),
                learnable(4.6),
                SweepPoint {
                    logit_scale_init: 0.0,
                    frozen: true,
                },
            ],
        }
    }
}

impl TrainRunConfig {
    pub fn inputs(&self) -> Vec<&Path> {
        let mut v = self.data.all().to_vec();
        v.push(&self.split);
        v.extend(self.training_truth.as_deref());
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Train,
    Val,
    #[default]
    Test,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Scores come from this checkpoint, or from `predictions` if set.
    pub checkpoint: PathBuf,
    pub predictions: Option<PathBuf>,
    pub data: DataPaths,
    /// Without a split manifest every image is evaluated.
    pub split: Option<PathBuf>,
    pub part: Part,
    pub gap_k: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            checkpoint: "model.json".into(),
            predictions: None,
            data: DataPaths::default(),
            split: None,
            part: Part::Test,
            gap_k: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictConfig {
    pub checkpoint: PathBuf,
    pub labels: PathBuf,
    pub features: PathBuf,
    /// Threshold table; entries below their class threshold are omitted.
    pub thresholds: Option<PathBuf>,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self {
            checkpoint: "model.json".into(),
            labels: "labels.csv".into(),
            features: "features.csv".into(),
            thresholds: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZeroShotConfig {
    pub checkpoint: PathBuf,
    pub features: PathBuf,
    /// Output key → prompt text.
    pub prompts: BTreeMap<u32, String>,
}

impl Default for ZeroShotConfig {
    fn default() -> Self {
        Self {
            checkpoint: "model.json".into(),
            features: "features.csv".into(),
            prompts: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdsConfig {
    pub checkpoint: PathBuf,
    pub data: DataPaths,
    pub split: PathBuf,
    pub target_recall: f64,
    /// Class id → target, overriding `target_recall`.
    pub per_class_recall: BTreeMap<u32, f64>,
}

impl Default for ThresholdsConfig {
    fn default() -> Self {
        Self {
            checkpoint: "model.json".into(),
            data: DataPaths::default(),
            split: "split.json".into(),
            target_recall: 0.99,
            per_class_recall: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExportConfig {
    pub checkpoint: PathBuf,
    pub features: PathBuf,
}

impl Default for ExportConfig {
    fn default() -> Self {
        Self {
            checkpoint: "model.json".into(),
            features: "features.csv".into(),
        }
    }
}
