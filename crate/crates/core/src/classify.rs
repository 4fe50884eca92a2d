//! Text-to-IPC categorization: ranked IPC codes with integer relevance
//! scores, from a remote categorization endpoint or a deterministic
//! keyword-lexicon stub.

use crate::cache::{request_key, Cache, CacheError};
use crate::ipc::IpcCode;
use crate::transport::{Transport, TransportError};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const DEFAULT_MAX_PREDICTIONS: usize = 5;
pub const DEFAULT_TEXT_BYTE_CAP: usize = 8 * 1024;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("empty text")]
    EmptyText,
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error("lexicon missing: {0}")]
    LexiconMissing(PathBuf),
    #[error("lexicon line {line}: {reason}")]
    LexiconParse { line: usize, reason: String },
    #[error("response adapter: {0}")]
    Adapter(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Subclass,
    Group,
}

impl Granularity {
    fn apply(&self, code: &IpcCode) -> IpcCode {
        match self {
            Granularity::Subclass => IpcCode {
                group: None,
                subgroup: None,
                ..code.clone()
            },
            Granularity::Group => code.clone(),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Granularity::Subclass => "subclass",
            Granularity::Group => "group",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct IpcPrediction {
    pub code: IpcCode,
    pub score: u64,
}

/// Ranked predictions for one text: scores non-increasing, ties broken by
/// code order, at most `max_predictions` entries.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct Classification {
    pub text_ref: String,
    pub predictions: Vec<IpcPrediction>,
    pub classifier_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StubLexicon {
    pub entries: BTreeMap<String, BTreeSet<IpcCode>>,
}

/// Parse a lexicon file: one `keyword<space>IPC-code` pair per line, `#`
/// comments; duplicate keywords merge their code sets.
pub fn load_lexicon(path: impl AsRef<Path>) -> Result<StubLexicon, ClassifyError> {
    let path = path.as_ref();
    let file =
        std::fs::File::open(path).map_err(|_| ClassifyError::LexiconMissing(path.to_path_buf()))?;
    let mut entries: BTreeMap<String, BTreeSet<IpcCode>> = BTreeMap::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let keyword = parts.next().unwrap_or_default().to_lowercase();
        let code_text = parts.next().ok_or(ClassifyError::LexiconParse {
            line: i + 1,
            reason: "expected 'keyword IPC-code'".into(),
        })?;
        if parts.next().is_some() {
            return Err(ClassifyError::LexiconParse {
                line: i + 1,
                reason: "more than two fields".into(),
            });
        }
        let code = IpcCode::parse(code_text).map_err(|e| ClassifyError::LexiconParse {
            line: i + 1,
            reason: e.to_string(),
        })?;
        entries.entry(keyword).or_default().insert(code);
    }
    Ok(StubLexicon { entries })
}

/// Parses the remote categorizer's response into ranked predictions.
pub trait ClassifierAdapter: Send + Sync {
    fn parse(&self, body: &str) -> Result<Vec<IpcPrediction>, String>;
}

/// Adapter for the documented JSON schema `{"predictions": [{"code":
/// "A61K", "score": 900}, ...]}`.
pub struct JsonClassifierAdapter;

impl ClassifierAdapter for JsonClassifierAdapter {
    fn parse(&self, body: &str) -> Result<Vec<IpcPrediction>, String> {
        #[derive(Deserialize)]
        struct Resp {
            predictions: Vec<IpcPrediction>,
        }
        serde_json::from_str::<Resp>(body)
            .map(|r| r.predictions)
            .map_err(|e| e.to_string())
    }
}

pub enum ClassifierBackend<'a> {
    Stub(&'a StubLexicon),
    Remote {
        endpoint: String,
        transport: &'a dyn Transport,
        cache: &'a Cache,
        adapter: &'a dyn ClassifierAdapter,
    },
}

fn truncate_at_sentence(text: &str, byte_cap: usize) -> &str {
    if text.len() <= byte_cap {
        return text;
    }
    let mut cut = byte_cap;
    while !text.is_char_boundary(cut) {
        cut -= 1;
    }
    match text[..cut].rfind('.') {
        Some(dot) if dot > 0 => &text[..=dot],
        _ => &text[..cut],
    }
}

fn rank(mut predictions: Vec<IpcPrediction>, max_predictions: usize) -> Vec<IpcPrediction> {
    predictions.sort_by(|a, b| b.score.cmp(&a.score).then_with(|| a.code.cmp(&b.code)));
    predictions.truncate(max_predictions);
    predictions
}

/// Classify a text into ranked IPC predictions. Deterministic for both
/// backends given the lexicon or a warm cache.
pub fn classify_text(
    text_ref: &str,
    text: &str,
    backend: &ClassifierBackend<'_>,
    granularity: Granularity,
    max_predictions: usize,
    byte_cap: usize,
) -> Result<Classification, ClassifyError> {
    let normalized = text.split_whitespace().collect::<Vec<_>>().join(" ");
    if normalized.is_empty() {
        return Err(ClassifyError::EmptyText);
    }
    let bounded = truncate_at_sentence(&normalized, byte_cap);
    match backend {
        ClassifierBackend::Stub(lexicon) => {
            let tokens: BTreeSet<String> = bounded
                .to_lowercase()
                .chars()
                .map(|c| if c.is_alphanumeric() { c } else { ' ' })
                .collect::<String>()
                .split_whitespace()
                .map(|t| t.to_string())
                .collect();
            // distinct lexicon keywords present in the text, per code
            let mut hits: BTreeMap<IpcCode, u64> = BTreeMap::new();
            for (keyword, codes) in &lexicon.entries {
                if tokens.contains(keyword) {
                    for code in codes {
                        *hits.entry(granularity.apply(code)).or_default() += 1;
                    }
                }
            }
            let predictions: Vec<IpcPrediction> = hits
                .into_iter()
                .map(|(code, n)| IpcPrediction {
                    code,
                    score: 100 * n,
                })
                .collect();
            Ok(Classification {
                text_ref: text_ref.to_string(),
                predictions: rank(predictions, max_predictions),
                classifier_id: "stub".into(),
            })
        }
        ClassifierBackend::Remote {
            endpoint,
            transport,
            cache,
            adapter,
        } => {
            let payload = serde_json::json!({
                "text": bounded,
                "granularity": granularity.as_str(),
            })
            .to_string();
            let key = request_key(&[endpoint, granularity.as_str(), bounded]);
            let body = match cache.get(&key) {
                Some(bytes) => String::from_utf8_lossy(&bytes).into_owned(),
                None => {
                    let body = transport.post(endpoint, &payload)?;
                    cache.put(&key, body.as_bytes())?;
                    body
                }
            };
            let predictions = adapter.parse(&body).map_err(ClassifyError::Adapter)?;
            let predictions = predictions
                .into_iter()
                .map(|p| IpcPrediction {
                    code: granularity.apply(&p.code),
                    score: p.score,
                })
                .collect();
            Ok(Classification {
                text_ref: text_ref.to_string(),
                predictions: rank(predictions, max_predictions),
                classifier_id: "remote".into(),
            })
        }
    }
}
