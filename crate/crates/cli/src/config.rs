//! Run configuration: one TOML file with a section per pipeline stage.
//! Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use hybridclf::classifiers::{ModelKind, NbParams, ResCnnConfig, TrainConfig};
use hybridclf::classifiers::MlpConfig;
use hybridclf::clustering::{AssignRule, GmmParams, KMeansParams, LabelVectorSource, LdaParams, MetaMethod, OpticsParams};
use hybridclf::features::CbowConfig;
use hybridclf::hierarchy::LeafMembership;
use hybridclf::text_prep::DropClasses;
use hybridclf::util::sha256_hex;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Every stage derives its random streams from this seed.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub paths: Paths,
    pub prepare: PrepareConfig,
    pub embed: EmbedConfig,
    pub cluster: ClusterConfig,
    pub train: TrainStageConfig,
    pub evaluate: EvaluateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("run"),
            paths: Paths::default(),
            prepare: PrepareConfig::default(),
            embed: EmbedConfig::default(),
            cluster: ClusterConfig::default(),
            train: TrainStageConfig::default(),
            evaluate: EvaluateConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Raw request records (`.jsonl` or `.csv`).
    pub corpus: Option<PathBuf>,
    /// Label dictionary (canonical names, aliases, location nouns).
    pub dictionary: Option<PathBuf>,
    pub stop_words: Option<PathBuf>,
    /// Segmentation lexicon; whitespace tokenization when absent.
    pub lexicon: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrepareConfig {
    pub split_ratio: f64,
    pub train_shard_size: usize,
    pub test_shard_size: usize,
    pub min_df: usize,
    pub drop: DropClasses,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        PrepareConfig {
            split_ratio: 0.8,
            train_shard_size: 40_000,
            test_shard_size: 4_000,
            min_df: 1,
            drop: DropClasses::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedConfig {
    pub cbow: CbowConfig,
    /// Tokens per sequence tensor (rows of the network input).
    pub max_len: usize,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            cbow: CbowConfig::default(),
            max_len: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterConfig {
    /// Which of the two maps hierarchical models are trained on.
    pub method: MetaMethod,
    pub label_vectors: LabelVectorSource,
    pub k_min: usize,
    pub k_max: usize,
    pub kmeans: KMeansParams,
    pub gmm: GmmParams,
    pub optics: OpticsParams,
    pub lda: LdaParams,
    pub assign_rule: AssignRule,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            method: MetaMethod::KmeansGmm,
            label_vectors: LabelVectorSource::NameTokens,
            k_min: 2,
            k_max: 10,
            kmeans: KMeansParams::default(),
            gmm: GmmParams::default(),
            optics: OpticsParams::default(),
            lda: LdaParams::default(),
            assign_rule: AssignRule::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainStageConfig {
    pub kinds: Vec<ModelKind>,
    /// Number of training shards used (from the first).
    pub train_shards: usize,
    /// Tail of the training samples held out for model selection.
    pub validation_fraction: f64,
    pub nb: NbParams,
    pub mlp: MlpConfig,
    pub rescnn: ResCnnConfig,
    pub optimizer: TrainConfig,
    /// Per-kind overrides of the optimizer settings (e.g. fewer epochs for
    /// the residual CNN).
    pub rescnn_optimizer: Option<TrainConfig>,
    pub membership: LeafMembership,
}

impl Default for TrainStageConfig {
    fn default() -> Self {
        TrainStageConfig {
            kinds: ModelKind::ALL.to_vec(),
            train_shards: 1,
            validation_fraction: 0.1,
            nb: NbParams::default(),
            mlp: MlpConfig::default(),
            rescnn: ResCnnConfig::default(),
            optimizer: TrainConfig::default(),
            rescnn_optimizer: None,
            membership: LeafMembership::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HierInference {
    #[default]
    Cascade,
    MaxProb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateConfig {
    pub test_shard: usize,
    pub timing_repeats: usize,
    pub clip: f64,
    pub hierarchical_inference: HierInference,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            test_shard: 0,
            timing_repeats: 3,
            clip: 1e-7,
            hierarchical_inference: HierInference::Cascade,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| hybridclf::Error::io(path, e))?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
        // relative paths in the file are relative to the file
        let base = path.parent().unwrap_or(Path::new("."));
        Ok(cfg.rebased(base))
    }

    fn rebased(mut self, base: &Path) -> Self {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        for p in [
            &mut self.paths.corpus,
            &mut self.paths.dictionary,
            &mut self.paths.stop_words,
            &mut self.paths.lexicon,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        self
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.to_toml().as_bytes())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if !(self.prepare.split_ratio > 0.0 && self.prepare.split_ratio < 1.0) {
            return bad("prepare.split_ratio must lie in (0, 1)");
        }
        if self.embed.max_len == 0 {
            return bad("embed.max_len must be positive");
        }
        if self.cluster.k_min < 2 || self.cluster.k_max < self.cluster.k_min {
            return bad("cluster.k_min must be >= 2 and <= cluster.k_max");
        }
        if !(0.0..0.9).contains(&self.train.validation_fraction) {
            return bad("train.validation_fraction must lie in [0, 0.9)");
        }
        if self.train.train_shards == 0 {
            return bad("train.train_shards must be positive");
        }
        if self.train.kinds.is_empty() {
            return bad("train.kinds is empty");
        }
        if self.evaluate.timing_repeats == 0 {
            return bad("evaluate.timing_repeats must be positive");
        }
        self.train.optimizer.validate()?;
        if let Some(o) = &self.train.rescnn_optimizer {
            o.validate()?;
        }
        Ok(())
    }

    /// Files a stage reads from outside the run directory must exist.
    pub fn require_inputs(&self, corpus: bool) -> Result<(), CliError> {
        let mut required: Vec<(&str, &Option<PathBuf>)> = vec![("paths.stop_words", &self.paths.stop_words), ("paths.lexicon", &self.paths.lexicon)];
        if corpus {
            required.push(("paths.corpus", &self.paths.corpus));
            required.push(("paths.dictionary", &self.paths.dictionary));
            for (key, p) in &required[2..] {
                if p.is_none() {
                    return Err(CliError::Config(format!("{key} is required")));
                }
            }
        }
        for (key, p) in required {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(CliError::Config(format!("{key}: {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    pub fn stage_dir(&self, stage: &str) -> PathBuf {
        self.out_dir.join(stage)
    }
}
