//! Bibliographic homonym retrieval: for each inventor cluster, query a
//! publication database under the canonical name form and collect the
//! homonymous author's publications. Affiliations of matched candidates
//! can be geocoded as a best-effort enrichment.

use crate::cache::{request_key, Cache, CacheError};
use crate::names::InventorCluster;
use crate::transport::{Transport, TransportError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HomonymError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("fixture not found: {0}")]
    FixtureNotFound(PathBuf),
    #[error("fixture line {line}: {reason}")]
    FixtureParse { line: usize, reason: String },
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error("response adapter: {0}")]
    Adapter(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Publication {
    pub pub_id: String,
    #[serde(default)]
    pub title: String,
    #[serde(rename = "abstract", default)]
    pub abstract_text: String,
    #[serde(default)]
    pub author_form_matched: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub affiliation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
}

impl Publication {
    pub fn has_abstract(&self) -> bool {
        !self.abstract_text.trim().is_empty()
    }
}

/// The candidate publications retrieved under one cluster's name form.
/// An empty `publications` list means the inventor has no author homonym.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HomonymSet {
    pub cluster_id: String,
    pub publications: Vec<Publication>,
    pub query_used: String,
    #[serde(default)]
    pub truncated: bool,
}

impl HomonymSet {
    pub fn is_homonym(&self) -> bool {
        !self.publications.is_empty()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GeoPoint {
    pub latitude: f64,
    pub longitude: f64,
    pub normalized_address: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthorQuery {
    pub query: String,
    /// Set when the canonical form was a single token and the query fell
    /// back to the bare token.
    pub unsplittable: bool,
}

/// Render the author-field query for a cluster's canonical form. A lone
/// all-uppercase token in non-initial position is treated as the surname
/// and moved to the front; otherwise token order is kept as-is.
pub fn build_author_query(cluster: &InventorCluster) -> AuthorQuery {
    let tokens: Vec<&str> = cluster.canonical.split_whitespace().collect();
    if tokens.len() <= 1 {
        let bare = tokens.first().copied().unwrap_or("");
        return AuthorQuery {
            query: format!("{bare}[Author]"),
            unsplittable: true,
        };
    }
    let is_upper = |t: &str| t.chars().count() > 1 && t.chars().all(|c| !c.is_lowercase());
    let upper_positions: Vec<usize> = tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| is_upper(t))
        .map(|(i, _)| i)
        .collect();
    let ordered: Vec<&str> = match upper_positions.as_slice() {
        [pos] if *pos > 0 => {
            let mut v = vec![tokens[*pos]];
            v.extend(tokens.iter().enumerate().filter(|(i, _)| i != pos).map(|(_, t)| *t));
            v
        }
        _ => tokens,
    };
    AuthorQuery {
        query: format!("{}[Author]", ordered.join(" ")),
        unsplittable: false,
    }
}

#[derive(Debug, Deserialize)]
struct FixtureLine {
    query: String,
    publications: Vec<Publication>,
}

/// Query-to-publications mapping loaded from a JSONL fixture.
#[derive(Debug, Clone, Default)]
pub struct PublicationFixture {
    map: BTreeMap<String, Vec<Publication>>,
}

impl PublicationFixture {
    pub fn load(path: impl AsRef<Path>) -> Result<PublicationFixture, HomonymError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|_| HomonymError::FixtureNotFound(path.to_path_buf()))?;
        let mut map = BTreeMap::new();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: FixtureLine =
                serde_json::from_str(&line).map_err(|e| HomonymError::FixtureParse {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            map.insert(parsed.query, parsed.publications);
        }
        Ok(PublicationFixture { map })
    }

    pub fn lookup(&self, query: &str) -> Vec<Publication> {
        self.map.get(query).cloned().unwrap_or_default()
    }
}

/// Two-phase search-then-fetch adapter: the search response carries the
/// publication IDs, the fetch response the metadata.
pub trait PublicationAdapter: Send + Sync {
    fn parse_search(&self, body: &str) -> Result<Vec<String>, String>;
    fn parse_fetch(&self, body: &str) -> Result<Vec<Publication>, String>;
}

/// Adapter for the documented JSON schemas `{"ids": [...]}` and
/// `{"publications": [...]}`.
pub struct JsonPublicationAdapter;

impl PublicationAdapter for JsonPublicationAdapter {
    fn parse_search(&self, body: &str) -> Result<Vec<String>, String> {
        #[derive(Deserialize)]
        struct Search {
            ids: Vec<String>,
        }
        serde_json::from_str::<Search>(body)
            .map(|s| s.ids)
            .map_err(|e| e.to_string())
    }

    fn parse_fetch(&self, body: &str) -> Result<Vec<Publication>, String> {
        #[derive(Deserialize)]
        struct Fetch {
            publications: Vec<Publication>,
        }
        serde_json::from_str::<Fetch>(body)
            .map(|f| f.publications)
            .map_err(|e| e.to_string())
    }
}

pub enum PublicationSource<'a> {
    Fixture(&'a PublicationFixture),
    Live {
        search_endpoint: String,
        fetch_endpoint: String,
        transport: &'a dyn Transport,
        cache: &'a Cache,
        adapter: &'a dyn PublicationAdapter,
    },
}

/// Retrieve the homonym set for one cluster: deduplicated by pub_id and
/// sorted by pub_id, capped at `max_results` (with a truncation flag).
pub fn fetch_publications(
    cluster: &InventorCluster,
    source: PublicationSource<'_>,
    max_results: usize,
) -> Result<HomonymSet, HomonymError> {
    let query = build_author_query(cluster);
    let mut pubs = match source {
        PublicationSource::Fixture(fixture) => fixture.lookup(&query.query),
        PublicationSource::Live {
            search_endpoint,
            fetch_endpoint,
            transport,
            cache,
            adapter,
        } => {
            let cached_get = |endpoint: &str, url: &str| -> Result<String, HomonymError> {
                let key = request_key(&[endpoint, url]);
                if let Some(bytes) = cache.get(&key) {
                    return Ok(String::from_utf8_lossy(&bytes).into_owned());
                }
                let body = transport.get(url)?;
                cache.put(&key, body.as_bytes())?;
                Ok(body)
            };
            let search_url = format!("{search_endpoint}?term={}", urlencode(&query.query));
            let ids = adapter
                .parse_search(&cached_get(&search_endpoint, &search_url)?)
                .map_err(HomonymError::Adapter)?;
            if ids.is_empty() {
                Vec::new()
            } else {
                let fetch_url = format!("{fetch_endpoint}?ids={}", ids.join(","));
                adapter
                    .parse_fetch(&cached_get(&fetch_endpoint, &fetch_url)?)
                    .map_err(HomonymError::Adapter)?
            }
        }
    };
    let mut seen: BTreeMap<String, Publication> = BTreeMap::new();
    for mut p in pubs.drain(..) {
        if p.pub_id.trim().is_empty() {
            continue;
        }
        if p.author_form_matched.is_empty() {
            p.author_form_matched = cluster.canonical.clone();
        }
        seen.entry(p.pub_id.clone()).or_insert(p);
    }
    let mut publications: Vec<Publication> = seen.into_values().collect();
    let truncated = publications.len() > max_results;
    if truncated {
        log::warn!(
            "cluster {}: truncating homonym set from {} to {max_results} publications",
            cluster.cluster_id,
            publications.len()
        );
        publications.truncate(max_results);
    }
    Ok(HomonymSet {
        cluster_id: cluster.cluster_id.clone(),
        publications,
        query_used: query.query,
        truncated,
    })
}

#[derive(Debug, Deserialize)]
struct GeoFixtureLine {
    address: String,
    result: Option<GeoPoint>,
}

#[derive(Debug, Clone, Default)]
pub struct GeoFixture {
    map: BTreeMap<String, Option<GeoPoint>>,
}

impl GeoFixture {
    pub fn load(path: impl AsRef<Path>) -> Result<GeoFixture, HomonymError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|_| HomonymError::FixtureNotFound(path.to_path_buf()))?;
        let mut map = BTreeMap::new();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: GeoFixtureLine =
                serde_json::from_str(&line).map_err(|e| HomonymError::FixtureParse {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            map.insert(parsed.address, parsed.result);
        }
        Ok(GeoFixture { map })
    }
}

pub enum GeoSource<'a> {
    Fixture(&'a GeoFixture),
    Live {
        endpoint: String,
        transport: &'a dyn Transport,
        cache: &'a Cache,
    },
}

/// Best-effort geocoding of a free-text affiliation. Never fails the
/// pipeline: transport errors, no-result responses and low-confidence
/// hits all come back as None.
pub fn geocode_affiliation(
    affiliation: &str,
    source: GeoSource<'_>,
    confidence_floor: f64,
) -> Option<GeoPoint> {
    if affiliation.trim().is_empty() {
        return None;
    }
    let point = match source {
        GeoSource::Fixture(fixture) => fixture.map.get(affiliation).cloned().flatten(),
        GeoSource::Live {
            endpoint,
            transport,
            cache,
        } => {
            let key = request_key(&[&endpoint, affiliation]);
            let body = match cache.get(&key) {
                Some(bytes) => String::from_utf8_lossy(&bytes).into_owned(),
                None => {
                    let url = format!("{endpoint}?q={}", urlencode(affiliation));
                    match transport.get(&url) {
                        Ok(body) => {
                            let _ = cache.put(&key, body.as_bytes());
                            body
                        }
                        Err(e) => {
                            log::warn!("geocoding '{affiliation}' failed: {e}");
                            return None;
                        }
                    }
                }
            };
            serde_json::from_str::<Option<GeoPoint>>(&body).ok().flatten()
        }
    };
    point.filter(|p| {
        p.confidence >= confidence_floor
            && (-90.0..=90.0).contains(&p.latitude)
            && (-180.0..=180.0).contains(&p.longitude)
    })
}

fn urlencode(s: &str) -> String {
    let mut out = String::new();
    for b in s.bytes() {
        match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => {
                out.push(b as char)
            }
            other => out.push_str(&format!("%{other:02X}")),
        }
    }
    out
}
