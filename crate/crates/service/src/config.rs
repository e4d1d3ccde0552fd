//! Engine descriptors as read from a JSON file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use scribe_core::asr::EngineDescriptor;
use scribe_core::cpr::{clean_corpus, normalise, LexiconTagger, NormalisationTables, RestorerHandle};
use scribe_core::diarise::{ClusterConfig, MergeConfig, SpectralConfig, SpectralEmbedder, SubprocessEmbedder};
use scribe_core::engine::EngineCommand;
use scribe_core::vad::{DetectorHandle, EnergyDetector, ExternalDetector, VadConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::Engines;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("bad engine config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DetectorConfig {
    Energy(VadConfig),
    Subprocess { command: EngineCommand },
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig::Energy(VadConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EmbedderConfig {
    Spectral(SpectralConfig),
    Subprocess { command: EngineCommand },
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig::Spectral(SpectralConfig::default())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RestorerConfig {
    #[default]
    Identity,
    Canned { map: std::collections::HashMap<String, String> },
    Subprocess { command: EngineCommand },
    /// Tagger trained at startup on a file of rich-text sentences, one per
    /// line.
    Lexicon { corpus: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnginesConfig {
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default)]
    pub embedder: EmbedderConfig,
    #[serde(default)]
    pub cluster: ClusterConfig,
    #[serde(default)]
    pub merge: MergeConfig,
    pub asr: EngineDescriptor,
    #[serde(default)]
    pub restorer: RestorerConfig,
}

impl EnginesConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn build(&self) -> Result<Engines, ConfigError> {
        let detector: Arc<dyn scribe_core::vad::SpeechDetector> = match &self.detector {
            DetectorConfig::Energy(cfg) => {
                cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
                Arc::new(EnergyDetector::new(cfg.clone()))
            }
            DetectorConfig::Subprocess { command } => {
                Arc::new(ExternalDetector { handle: DetectorHandle { command: command.clone() } })
            }
        };
        let embedder: Arc<dyn scribe_core::diarise::SpeakerEmbedder> = match &self.embedder {
            EmbedderConfig::Spectral(cfg) => Arc::new(SpectralEmbedder::new(cfg.clone())),
            EmbedderConfig::Subprocess { command } => Arc::new(SubprocessEmbedder { command: command.clone() }),
        };
        let restorer = match &self.restorer {
            RestorerConfig::Identity => RestorerHandle::Identity,
            RestorerConfig::Canned { map } => RestorerHandle::Canned(map.clone()),
            RestorerConfig::Subprocess { command } => RestorerHandle::Subprocess(command.clone()),
            RestorerConfig::Lexicon { corpus } => {
                let text = std::fs::read_to_string(corpus)
                    .map_err(|source| ConfigError::Read { path: corpus.clone(), source })?;
                let tables = NormalisationTables::builtin();
                let sentences = text
                    .lines()
                    .filter(|l| !l.trim().is_empty())
                    .map(|l| normalise(&clean_corpus(l), &tables))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| ConfigError::Invalid(format!("lexicon corpus: {e}")))?;
                RestorerHandle::Classifier(Arc::new(LexiconTagger::train(&sentences)))
            }
        };
        Ok(Engines {
            detector,
            embedder,
            recogniser: Arc::new(self.asr.clone()),
            restorer: Arc::new(restorer),
            cluster: self.cluster.clone(),
            merge: self.merge.clone(),
        })
    }

    /// Concurrent recogniser calls allowed by the engine, if it sets a cap.
    pub fn recogniser_limit(&self) -> Option<usize> {
        self.asr.max_concurrency
    }
}
