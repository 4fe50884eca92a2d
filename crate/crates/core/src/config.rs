//! Pipeline configuration: corpora, backends, fixture paths, endpoints,
//! thresholds and sampling parameters, loaded from a TOML file. Endpoint
//! credentials may be overridden through the environment only.

use crate::classify::Granularity;
use crate::qualify::SamplingParams;
use crate::query::CorpusSpec;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {0}: {1}")]
    Read(PathBuf, std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Fixture,
    Live,
    Stub,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneralConfig {
    pub cache_dir: PathBuf,
    pub artifacts_dir: PathBuf,
    pub workers: usize,
    pub strict_parse: bool,
    pub max_publications: usize,
    pub geocode_confidence_floor: f64,
}

impl Default for GeneralConfig {
    fn default() -> Self {
        GeneralConfig {
            cache_dir: PathBuf::from("cache"),
            artifacts_dir: PathBuf::from("artifacts"),
            workers: 1,
            strict_parse: false,
            max_publications: 200,
            geocode_confidence_floor: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub name_similarity: u8,
    pub classifier_score: u64,
    pub prefix_len: usize,
    pub max_predictions: usize,
    pub text_byte_cap: usize,
    pub granularity: Granularity,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            name_similarity: 90,
            classifier_score: 800,
            prefix_len: 4,
            max_predictions: 5,
            text_byte_cap: 8192,
            granularity: Granularity::Subclass,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Backends {
    pub patents: BackendKind,
    pub publications: BackendKind,
    pub classifier: BackendKind,
    pub geocoder: BackendKind,
}

impl Default for Backends {
    fn default() -> Self {
        Backends {
            patents: BackendKind::Fixture,
            publications: BackendKind::Fixture,
            classifier: BackendKind::Stub,
            geocoder: BackendKind::Fixture,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Fixtures {
    pub patents: Option<PathBuf>,
    pub publications: Option<PathBuf>,
    pub geocoder: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Endpoints {
    pub patents: Option<String>,
    pub publication_search: Option<String>,
    pub publication_fetch: Option<String>,
    pub classifier: Option<String>,
    pub geocoder: Option<String>,
    pub api_key: Option<String>,
    pub rate_limit_rps: f64,
    pub max_retries: u32,
}

impl Default for Endpoints {
    fn default() -> Self {
        Endpoints {
            patents: None,
            publication_search: None,
            publication_fetch: None,
            classifier: None,
            geocoder: None,
            api_key: None,
            rate_limit_rps: 3.0,
            max_retries: 3,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default)]
    pub general: GeneralConfig,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub sampling: SamplingParams,
    #[serde(default)]
    pub backends: Backends,
    #[serde(default)]
    pub fixtures: Fixtures,
    #[serde(default)]
    pub endpoints: Endpoints,
    #[serde(default, rename = "corpus")]
    pub corpora: Vec<CorpusSpec>,
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<PipelineConfig, ConfigError> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| ConfigError::Read(path.to_path_buf(), e))?;
        let mut config: PipelineConfig = toml::from_str(&text)?;
        // credentials may come from the environment, nothing else may
        if let Ok(key) = std::env::var("LINKER_API_KEY") {
            config.endpoints.api_key = Some(key);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.corpora.is_empty() {
            return Err(ConfigError::Invalid("no [[corpus]] entries".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for spec in &self.corpora {
            spec.validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            if !seen.insert(&spec.corpus_id) {
                return Err(ConfigError::Invalid(format!(
                    "duplicate corpus_id '{}'",
                    spec.corpus_id
                )));
            }
        }
        if self.thresholds.name_similarity > 100 {
            return Err(ConfigError::Invalid("name_similarity must be in [0, 100]".into()));
        }
        if !(1..=8).contains(&self.thresholds.prefix_len) {
            return Err(ConfigError::Invalid("prefix_len must be in [1, 8]".into()));
        }
        self.sampling
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let fixture_checks: [(&str, BackendKind, &Option<PathBuf>); 4] = [
            ("patents", self.backends.patents, &self.fixtures.patents),
            (
                "publications",
                self.backends.publications,
                &self.fixtures.publications,
            ),
            ("geocoder", self.backends.geocoder, &self.fixtures.geocoder),
            ("classifier lexicon", self.backends.classifier, &self.fixtures.lexicon),
        ];
        for (name, backend, path) in fixture_checks {
            let needs_file = matches!(backend, BackendKind::Fixture)
                || (name == "classifier lexicon" && matches!(backend, BackendKind::Stub));
            if needs_file {
                match path {
                    Some(p) if p.exists() => {}
                    Some(p) => {
                        return Err(ConfigError::Invalid(format!(
                            "{name} fixture {} does not exist",
                            p.display()
                        )))
                    }
                    None => {
                        return Err(ConfigError::Invalid(format!(
                            "{name} backend requires a fixture path"
                        )))
                    }
                }
            }
        }
        if matches!(self.backends.classifier, BackendKind::Fixture) {
            return Err(ConfigError::Invalid(
                "classifier backend must be 'stub' or 'live'".into(),
            ));
        }
        Ok(())
    }

    pub fn corpus(&self, corpus_id: &str) -> Result<&CorpusSpec, ConfigError> {
        self.corpora
            .iter()
            .find(|c| c.corpus_id == corpus_id)
            .ok_or_else(|| ConfigError::Invalid(format!("unknown corpus '{corpus_id}'")))
    }
}
