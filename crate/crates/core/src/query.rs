//! Corpus definitions and validation of the field-prefixed query language
//! used by the patent search endpoint (pa= applicant, ic= IPC, pd=
//! publication date, pr= priority country).

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const KNOWN_FIELDS: [&str; 4] = ["pa", "ic", "pd", "pr"];
const KEYWORDS: [&str; 4] = ["and", "or", "not", "within"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("malformed query at byte {position}: {reason}")]
pub struct MalformedQuery {
    pub position: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct CorpusSpec {
    pub corpus_id: String,
    pub query: String,
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<(i32, i32)>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CorpusSpecError {
    #[error("corpus_id '{0}' is empty or contains characters outside [A-Za-z0-9_-]")]
    BadCorpusId(String),
    #[error(transparent)]
    BadQuery(#[from] MalformedQuery),
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<(), CorpusSpecError> {
        if self.corpus_id.is_empty()
            || !self
                .corpus_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(CorpusSpecError::BadCorpusId(self.corpus_id.clone()));
        }
        validate_query(&self.query)?;
        Ok(())
    }
}

/// Returns the spec's query verbatim after validation.
pub fn build_query(spec: &CorpusSpec) -> Result<String, CorpusSpecError> {
    spec.validate()?;
    Ok(spec.query.clone())
}

/// Checks balanced parentheses and quotes and that every field-prefixed
/// term (`xx=` or `xx within`) uses a known field.
pub fn validate_query(query: &str) -> Result<(), MalformedQuery> {
    if query.trim().is_empty() {
        return Err(MalformedQuery {
            position: 0,
            reason: "empty query".into(),
        });
    }
    let bytes: Vec<(usize, char)> = query.char_indices().collect();
    let mut paren_stack: Vec<usize> = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let (pos, c) = bytes[i];
        match c {
            '"' => {
                // scan to closing quote
                let mut j = i + 1;
                while j < bytes.len() && bytes[j].1 != '"' {
                    j += 1;
                }
                if j == bytes.len() {
                    return Err(MalformedQuery {
                        position: pos,
                        reason: "unbalanced quote".into(),
                    });
                }
                i = j + 1;
            }
            '(' => {
                paren_stack.push(pos);
                i += 1;
            }
            ')' => {
                if paren_stack.pop().is_none() {
                    return Err(MalformedQuery {
                        position: pos,
                        reason: "unmatched closing parenthesis".into(),
                    });
                }
                i += 1;
            }
            c if c.is_alphanumeric() || c == '*' || c == '_' || c == '-' => {
                let start = i;
                while i < bytes.len() {
                    let ch = bytes[i].1;
                    if ch.is_alphanumeric() || ch == '*' || ch == '_' || ch == '-' {
                        i += 1;
                    } else {
                        break;
                    }
                }
                let word: String = bytes[start..i].iter().map(|(_, c)| *c).collect();
                // skip spaces to inspect what follows
                let mut k = i;
                while k < bytes.len() && bytes[k].1 == ' ' {
                    k += 1;
                }
                let followed_by_eq = k < bytes.len() && bytes[k].1 == '=';
                let followed_by_within = {
                    let tail: String = bytes[k..].iter().map(|(_, c)| *c).collect();
                    tail.to_ascii_lowercase().starts_with("within")
                };
                if followed_by_eq || (followed_by_within && !KEYWORDS.contains(&word.to_ascii_lowercase().as_str())) {
                    let lower = word.to_ascii_lowercase();
                    if !KNOWN_FIELDS.contains(&lower.as_str()) {
                        return Err(MalformedQuery {
                            position: bytes[start].0,
                            reason: format!("unknown field prefix '{word}'"),
                        });
                    }
                }
                if followed_by_eq {
                    // require a value after '='
                    let mut v = k + 1;
                    while v < bytes.len() && bytes[v].1 == ' ' {
                        v += 1;
                    }
                    if v == bytes.len() || matches!(bytes[v].1, ')' | '=') {
                        return Err(MalformedQuery {
                            position: bytes[k].0,
                            reason: format!("field '{word}' has no value"),
                        });
                    }
                    i = k + 1;
                }
            }
            c if c == ' ' || c == ',' || c == '=' || c == '.' => {
                i += 1;
            }
            other => {
                return Err(MalformedQuery {
                    position: pos,
                    reason: format!("unexpected character '{other}'"),
                });
            }
        }
    }
    if let Some(pos) = paren_stack.pop() {
        return Err(MalformedQuery {
            position: pos,
            reason: "unbalanced opening parenthesis".into(),
        });
    }
    Ok(())
}
