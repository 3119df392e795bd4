use std::path::{Path, PathBuf};

use incivility::classifier::{CharModelConfig, LogisticConfig};
use incivility::corpus::DEFAULT_CONTEXT_K;
use incivility::tdsa::TdLstmConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Share of labeled tweets used for training: 21,000 of 24,271.
pub const DEFAULT_TRAIN_FRACTION: f64 = 21_000.0 / 24_271.0;

/// Input and model files. Relative paths are resolved against the directory
/// of the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub profiles: Option<PathBuf>,
    pub timelines: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub category_lexicon: Option<PathBuf>,
    pub entities: Option<PathBuf>,
    pub tdsa_data: Option<PathBuf>,
    pub tdsa_checkpoint: Option<PathBuf>,
    pub conflicts: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub split: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.corpus,
            &mut self.profiles,
            &mut self.timelines,
            &mut self.lexicon,
            &mut self.labels,
            &mut self.embeddings,
            &mut self.category_lexicon,
            &mut self.entities,
            &mut self.tdsa_data,
            &mut self.tdsa_checkpoint,
            &mut self.conflicts,
            &mut self.checkpoint,
            &mut self.split,
            &mut self.predictions,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Share of labeled tweets in the training split; the rest is the test set.
    pub train_fraction: f64,
    /// Share of the training split held out for early stopping.
    pub valid_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_fraction: DEFAULT_TRAIN_FRACTION,
            valid_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TdsaSection {
    pub model: TdLstmConfig,
    /// Width of randomly initialized word vectors when no embedding file is
    /// configured.
    pub random_embedding_dim: usize,
}

impl Default for TdsaSection {
    fn default() -> Self {
        TdsaSection {
            model: TdLstmConfig::default(),
            random_embedding_dim: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub logistic: LogisticConfig,
    pub l2: f64,
    pub ngram_sizes: Vec<usize>,
    pub min_df: usize,
    pub chi2_k: usize,
    /// Append the ten textual features to the n-gram columns.
    pub textual: bool,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            logistic: LogisticConfig::default(),
            l2: 1e-3,
            ngram_sizes: vec![1, 2, 3],
            min_df: 2,
            chi2_k: incivility::features::DEFAULT_CHI2_K,
            textual: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConflictSection {
    pub context_k: usize,
}

impl Default for ConflictSection {
    fn default() -> Self {
        ConflictSection {
            context_k: DEFAULT_CONTEXT_K,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PosthocSection {
    pub bucket_edges: Vec<f64>,
    pub ratio_edges: Vec<f64>,
}

impl Default for PosthocSection {
    fn default() -> Self {
        PosthocSection {
            bucket_edges: incivility::posthoc::BucketSpec::default().edges().to_vec(),
            ratio_edges: vec![0.25, 0.5, 1.0, 2.0, 4.0],
        }
    }
}

/// Declarative description of one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub paths: Paths,
    pub split: SplitConfig,
    pub char_model: CharModelConfig,
    pub tdsa: TdsaSection,
    pub baseline: BaselineConfig,
    pub conflicts: ConflictSection,
    pub posthoc: PosthocSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            paths: Paths::default(),
            split: SplitConfig::default(),
            char_model: CharModelConfig::default(),
            tdsa: TdsaSection::default(),
            baseline: BaselineConfig::default(),
            conflicts: ConflictSection::default(),
            posthoc: PosthocSection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn parse(raw: &str) -> Result<Self> {
        toml::from_str(raw).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads a TOML config and resolves its relative paths against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let raw =
            std::fs::read_to_string(path).map_err(|e| CliError::missing("config", path, e))?;
        let mut cfg = Self::parse(&raw)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.paths.resolve(base);
        if cfg.out_dir.is_relative() {
            cfg.out_dir = base.join(&cfg.out_dir);
        }
        Ok(cfg)
    }

    /// Applies a seed override, which also seeds model training.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_out_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.out_dir = dir.into();
        self
    }

    /// Hex SHA-256 of the canonical JSON form of the config.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn out(&self, file: &str) -> PathBuf {
        self.out_dir.join(file)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.split;
        if !(0.0..=1.0).contains(&s.train_fraction) || !(0.0..1.0).contains(&s.valid_fraction) {
            return Err(CliError::Config(
                "split.train_fraction must lie in [0, 1] and split.valid_fraction in [0, 1)".into(),
            ));
        }
        if self.conflicts.context_k == 0 {
            return Err(CliError::Config(
                "conflicts.context_k must be positive".into(),
            ));
        }
        Ok(())
    }
}
