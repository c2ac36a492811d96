//! Run configuration: a TOML schema binding corpus source, partition spec,
//! and experiment specs. LLM credentials come only from environment
//! variables, never from config files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{IngestFormat, IngestSchema, SynthSpec, VocabMode};
use crate::corpus::FeatureScheme;
use crate::error::{Error, Result};
use crate::fed::ExperimentSpec;
use crate::partition::PartitionSpec;
use crate::strategy::HttpProviderConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum CorpusSource {
    Synthetic { spec: SynthSpec },
    File {
        path: PathBuf,
        format: IngestFormat,
        #[serde(default)]
        schema: IngestSchema,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureConfig {
    #[serde(default = "default_max_features")]
    pub max_features: usize,
    #[serde(default = "default_vocab_mode")]
    pub vocab_mode: VocabMode,
    #[serde(default = "default_scheme")]
    pub scheme: FeatureScheme,
}

fn default_max_features() -> usize {
    5000
}
fn default_vocab_mode() -> VocabMode {
    VocabMode::PublicOnly
}
fn default_scheme() -> FeatureScheme {
    FeatureScheme::Tfidf
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            max_features: default_max_features(),
            vocab_mode: default_vocab_mode(),
            scheme: default_scheme(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub corpus: CorpusSource,
    #[serde(default)]
    pub features: FeatureConfig,
    pub partition: PartitionSpec,
    pub experiments: Vec<ExperimentSpec>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// HTTP LLM endpoint for llmwc; the credential is read from the
    /// environment variable named in `auth_env`.
    #[serde(default)]
    pub llm: Option<HttpProviderConfig>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.experiments.is_empty() {
            return Err(Error::Config("at least one experiment is required".into()));
        }
        self.partition.validate()?;
        Ok(())
    }

    pub fn from_toml(s: &str) -> Result<RunConfig> {
        let config: RunConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::from_toml(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fed::Method;
    use crate::model::{Architecture, Optimizer, TrainingConfig};
    use crate::partition::Regime;
    use crate::strategy::StrategyConfig;

    fn sample() -> RunConfig {
        RunConfig {
            corpus: CorpusSource::Synthetic {
                spec: SynthSpec::default(),
            },
            features: FeatureConfig::default(),
            partition: PartitionSpec {
                num_clients: 5,
                alpha: 1.0,
                regime: Regime::MultiDomainNonIid,
                public_fraction: 0.2,
                split_ratio: (8, 1, 1),
                seed: 0,
                global_test_alpha: 0.8,
            },
            experiments: vec![ExperimentSpec {
                method: Method::AdafdEnwc,
                rounds: 5,
                local_epochs: 3,
                client_archs: vec![Architecture::SoftmaxLinear],
                server_arch: Architecture::Mlp { hidden: vec![32] },
                strategy: StrategyConfig::default(),
                local_training: TrainingConfig::default(),
                server_training: TrainingConfig {
                    optimizer: Optimizer::Adam,
                    ..TrainingConfig::default()
                },
                local_distill_epochs: 1,
                tau: 1.0,
                seed: 0,
                parallel_clients: true,
                force_uniform_weights: false,
                force_distill_mode: None,
            }],
            output_dir: PathBuf::from("out"),
            seed: 42,
            llm: None,
        }
    }

    #[test]
    fn toml_round_trip_is_identity() {
        let config = sample();
        let text = config.to_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(text, back.to_toml().unwrap());
    }

    #[test]
    fn empty_experiments_rejected() {
        let mut config = sample();
        config.experiments.clear();
        assert!(config.validate().is_err());
    }
}
