//! International Patent Classification symbols.
//!
//! An IPC symbol is section letter (A-H), two-digit class, subclass letter,
//! and an optional main group / subgroup pair, e.g. `A61K31/00`. The
//! canonical form is the compressed spelling without internal spaces.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid IPC symbol: {reason}")]
pub struct InvalidIpcSymbol {
    pub reason: String,
}

fn invalid(reason: impl Into<String>) -> InvalidIpcSymbol {
    InvalidIpcSymbol {
        reason: reason.into(),
    }
}

/// A parsed IPC code. Serializes as its canonical compressed symbol.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IpcCode {
    pub section: char,
    pub class: u8,
    pub subclass: char,
    pub group: Option<String>,
    pub subgroup: Option<String>,
}

impl IpcCode {
    /// Parse a symbol in spaced (`A61K 31/00`) or compressed (`A61K31/00`)
    /// form. A bare subclass (`A61K`) is valid.
    pub fn parse(symbol_text: &str) -> Result<IpcCode, InvalidIpcSymbol> {
        let text: String = symbol_text.chars().filter(|c| !c.is_whitespace()).collect();
        if text.is_empty() {
            return Err(invalid("empty input"));
        }
        let chars: Vec<char> = text.chars().collect();
        if chars.len() < 4 {
            return Err(invalid(format!(
                "symbol '{text}' is shorter than section+class+subclass"
            )));
        }
        let section = chars[0].to_ascii_uppercase();
        if !('A'..='H').contains(&section) {
            return Err(invalid(format!("section '{}' is not in A-H", chars[0])));
        }
        if !(chars[1].is_ascii_digit() && chars[2].is_ascii_digit()) {
            return Err(invalid(format!("class '{}{}' is not two digits", chars[1], chars[2])));
        }
        let class: u8 = text[1..3].parse().map_err(|_| invalid("unparseable class"))?;
        if class == 0 {
            return Err(invalid("class 00 is not a valid IPC class"));
        }
        let subclass = chars[3].to_ascii_uppercase();
        if !subclass.is_ascii_uppercase() {
            return Err(invalid(format!("subclass '{}' is not a letter", chars[3])));
        }
        let rest = &chars[4..];
        let (group, subgroup) = if rest.is_empty() {
            (None, None)
        } else {
            let mut split = rest.splitn(2, |c| *c == '/');
            let group_part: String = split.next().unwrap_or(&[]).iter().collect();
            let sub_part: Option<String> = split.next().map(|s| s.iter().collect());
            if group_part.is_empty() || !group_part.chars().all(|c| c.is_ascii_digit()) {
                return Err(invalid(format!("group '{group_part}' is not numeric")));
            }
            if let Some(sub) = &sub_part {
                if sub.is_empty() || !sub.chars().all(|c| c.is_ascii_digit()) {
                    return Err(invalid(format!("subgroup '{sub}' is not numeric")));
                }
            }
            (Some(group_part), sub_part)
        };
        Ok(IpcCode {
            section,
            class,
            subclass,
            group,
            subgroup,
        })
    }

    /// Canonical compressed symbol, e.g. `A61K31/00`.
    pub fn render(&self) -> String {
        let mut out = format!("{}{:02}{}", self.section, self.class, self.subclass);
        if let Some(g) = &self.group {
            out.push_str(g);
            if let Some(s) = &self.subgroup {
                out.push('/');
                out.push_str(s);
            }
        }
        out
    }

    /// First `len` characters of the canonical symbol (whole symbol when
    /// shorter). `prefix(c, 4)` is exactly section+class+subclass.
    pub fn prefix(&self, len: usize) -> String {
        self.render().chars().take(len).collect()
    }
}

impl fmt::Display for IpcCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl Serialize for IpcCode {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.render())
    }
}

impl<'de> Deserialize<'de> for IpcCode {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        IpcCode::parse(&s).map_err(serde::de::Error::custom)
    }
}
