//! Stage orchestration: the fixed chain ingest -> normalize -> homonyms ->
//! classify -> match -> (geocode) -> sample -> report, run as resumable
//! steps over on-disk JSONL artifacts with content hashes.

use crate::cache::{atomic_write, sha256_hex, Cache};
use crate::classify::{
    classify_text, load_lexicon, Classification, ClassifierBackend, ClassifyError,
    JsonClassifierAdapter,
};
use crate::config::{BackendKind, ConfigError, PipelineConfig};
use crate::corpus::{
    fetch_patents, IngestError, JsonPatentAdapter, PatentRecord, PatentSource,
};
use crate::homonyms::{
    fetch_publications, geocode_affiliation, GeoFixture, GeoPoint, GeoSource, HomonymError,
    HomonymSet, JsonPublicationAdapter, PublicationFixture, PublicationSource,
};
use crate::matching::{
    aggregate_candidates, compute_corpus_stats, decide_match, AuthorInventorCandidate,
    MatchDecision, StatsError,
};
use crate::names::{cluster_inventors, InventorCluster};
use crate::qualify::{
    build_report, draw_sample, record_verdict, QualificationReport, QualificationSample,
    QualifyError, Verdict, VerdictCounts,
};
use crate::query::{build_query, CorpusSpecError};
use crate::transport::HttpTransport;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Query(#[from] CorpusSpecError),
    #[error("upstream stage '{0}' has not been run")]
    UpstreamMissing(String),
    #[error("upstream stage '{0}' is stale (artifact hash mismatch)")]
    StaleUpstream(String),
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Homonym(#[from] HomonymError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Qualify(#[from] QualifyError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("artifact parse: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

impl PipelineError {
    /// CLI exit code: 2 validation, 3 upstream/transport, 4 missing artifact.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_)
            | PipelineError::Query(_)
            | PipelineError::Invalid(_)
            | PipelineError::Stats(_) => 2,
            PipelineError::Qualify(e) => match e {
                QualifyError::MissingArtifact(_) => 4,
                _ => 2,
            },
            PipelineError::UpstreamMissing(_) | PipelineError::StaleUpstream(_) => 3,
            PipelineError::Ingest(e) => match e {
                IngestError::Transport(_) => 3,
                IngestError::FixtureNotFound(_) => 4,
                _ => 2,
            },
            PipelineError::Homonym(e) => match e {
                HomonymError::Transport(_) => 3,
                HomonymError::FixtureNotFound(_) => 4,
                _ => 2,
            },
            PipelineError::Classify(e) => match e {
                ClassifyError::Transport(_) => 3,
                ClassifyError::LexiconMissing(_) => 4,
                _ => 2,
            },
            PipelineError::MissingArtifact(_) => 4,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Normalize,
    Homonyms,
    Classify,
    Match,
    Geocode,
    Sample,
    Report,
}

impl Stage {
    pub const CHAIN: [Stage; 8] = [
        Stage::Ingest,
        Stage::Normalize,
        Stage::Homonyms,
        Stage::Classify,
        Stage::Match,
        Stage::Geocode,
        Stage::Sample,
        Stage::Report,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Normalize => "normalize",
            Stage::Homonyms => "homonyms",
            Stage::Classify => "classify",
            Stage::Match => "match",
            Stage::Geocode => "geocode",
            Stage::Sample => "sample",
            Stage::Report => "report",
        }
    }

    pub fn from_name(name: &str) -> Option<Stage> {
        Stage::CHAIN.iter().copied().find(|s| s.name() == name)
    }

    pub fn upstream(&self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::Normalize => &[Stage::Ingest],
            Stage::Homonyms => &[Stage::Normalize],
            Stage::Classify => &[Stage::Homonyms],
            Stage::Match => &[Stage::Ingest, Stage::Normalize, Stage::Homonyms, Stage::Classify],
            Stage::Geocode => &[Stage::Normalize, Stage::Homonyms, Stage::Match],
            Stage::Sample => &[Stage::Match],
            Stage::Report => &[
                Stage::Ingest,
                Stage::Normalize,
                Stage::Homonyms,
                Stage::Match,
                Stage::Sample,
            ],
        }
    }

    fn files(&self) -> &'static [&'static str] {
        match self {
            Stage::Ingest => &["ingest.jsonl"],
            Stage::Normalize => &["normalize.jsonl"],
            Stage::Homonyms => &["homonyms.jsonl"],
            Stage::Classify => &["classify.jsonl"],
            Stage::Match => &["decisions.jsonl", "candidates.jsonl"],
            Stage::Geocode => &["geocode.jsonl"],
            Stage::Sample => &["sample.json"],
            Stage::Report => &["report.txt", "report.json"],
        }
    }
}

/// Per-stage provenance: which files were written, their hashes, and the
/// upstream stage hashes the run was based on.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct StageArtifact {
    pub stage: String,
    pub corpus_id: String,
    pub files: BTreeMap<String, String>,
    pub upstream: BTreeMap<String, String>,
    pub produced_at: String,
    pub tool_version: String,
}

impl StageArtifact {
    pub fn stage_hash(&self) -> String {
        let mut buf = String::new();
        for (name, hash) in &self.files {
            buf.push_str(name);
            buf.push(':');
            buf.push_str(hash);
            buf.push('\n');
        }
        sha256_hex(buf.as_bytes())
    }
}

#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub stage: &'static str,
    pub corpus_id: String,
    pub noop: bool,
    pub summary: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GeoEntry {
    pub cluster_id: String,
    pub geo: Option<GeoPoint>,
}

pub struct Pipeline<'a> {
    pub config: &'a PipelineConfig,
}

impl<'a> Pipeline<'a> {
    pub fn new(config: &'a PipelineConfig) -> Pipeline<'a> {
        Pipeline { config }
    }

    fn corpus_dir(&self, corpus_id: &str) -> PathBuf {
        self.config.general.artifacts_dir.join(corpus_id)
    }

    fn meta_path(&self, corpus_id: &str, stage: Stage) -> PathBuf {
        let name = format!("{}.meta.json", stage.name());
        if stage == Stage::Report {
            self.config.general.artifacts_dir.join(name)
        } else {
            self.corpus_dir(corpus_id).join(name)
        }
    }

    fn stage_dir(&self, corpus_id: &str, stage: Stage) -> PathBuf {
        if stage == Stage::Report {
            self.config.general.artifacts_dir.clone()
        } else {
            self.corpus_dir(corpus_id)
        }
    }

    fn load_meta(&self, corpus_id: &str, stage: Stage) -> Option<StageArtifact> {
        let text = std::fs::read_to_string(self.meta_path(corpus_id, stage)).ok()?;
        serde_json::from_str(&text).ok()
    }

    fn meta_is_valid(&self, corpus_id: &str, meta: &StageArtifact) -> bool {
        let stage = match Stage::from_name(&meta.stage) {
            Some(s) => s,
            None => return false,
        };
        let dir = self.stage_dir(corpus_id, stage);
        meta.files.iter().all(|(name, hash)| {
            std::fs::read(dir.join(name))
                .map(|bytes| sha256_hex(&bytes) == *hash)
                .unwrap_or(false)
        })
    }

    fn check_upstream(
        &self,
        corpus_id: &str,
        stage: Stage,
    ) -> Result<BTreeMap<String, String>, PipelineError> {
        let mut hashes = BTreeMap::new();
        for up in stage.upstream() {
            let meta = self
                .load_meta(corpus_id, *up)
                .ok_or_else(|| PipelineError::UpstreamMissing(up.name().to_string()))?;
            if !self.meta_is_valid(corpus_id, &meta) {
                return Err(PipelineError::StaleUpstream(up.name().to_string()));
            }
            hashes.insert(up.name().to_string(), meta.stage_hash());
        }
        Ok(hashes)
    }

    fn write_meta(
        &self,
        corpus_id: &str,
        stage: Stage,
        upstream: BTreeMap<String, String>,
    ) -> Result<StageArtifact, PipelineError> {
        let dir = self.stage_dir(corpus_id, stage);
        let mut files = BTreeMap::new();
        for name in stage.files() {
            let bytes = std::fs::read(dir.join(name))
                .map_err(|_| PipelineError::MissingArtifact(format!("{}/{name}", dir.display())))?;
            files.insert(name.to_string(), sha256_hex(&bytes));
        }
        let meta = StageArtifact {
            stage: stage.name().to_string(),
            corpus_id: corpus_id.to_string(),
            files,
            upstream,
            produced_at: chrono::Utc::now().to_rfc3339(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        };
        atomic_write(
            &self.meta_path(corpus_id, stage),
            serde_json::to_string_pretty(&meta)?.as_bytes(),
        )?;
        Ok(meta)
    }

    fn up_to_date(
        &self,
        corpus_id: &str,
        stage: Stage,
        upstream: &BTreeMap<String, String>,
    ) -> bool {
        match self.load_meta(corpus_id, stage) {
            Some(meta) => self.meta_is_valid(corpus_id, &meta) && meta.upstream == *upstream,
            None => false,
        }
    }

    fn write_jsonl<T: Serialize>(&self, path: &Path, items: &[T]) -> Result<(), PipelineError> {
        let mut buf = String::new();
        for item in items {
            buf.push_str(&serde_json::to_string(item)?);
            buf.push('\n');
        }
        atomic_write(path, buf.as_bytes())?;
        Ok(())
    }

    fn read_jsonl<T: for<'de> Deserialize<'de>>(&self, path: &Path) -> Result<Vec<T>, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|_| PipelineError::MissingArtifact(path.display().to_string()))?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(PipelineError::from))
            .collect()
    }

    /// Run one per-corpus stage (or the cross-corpus report). Re-running
    /// an up-to-date stage is a no-op unless `force`.
    pub fn run_stage(
        &self,
        corpus_id: &str,
        stage: Stage,
        force: bool,
    ) -> Result<StageOutcome, PipelineError> {
        if stage == Stage::Report {
            return self.run_report(force);
        }
        let upstream = self.check_upstream(corpus_id, stage)?;
        if !force && self.up_to_date(corpus_id, stage, &upstream) {
            return Ok(StageOutcome {
                stage: stage.name(),
                corpus_id: corpus_id.to_string(),
                noop: true,
                summary: "up to date".into(),
            });
        }
        std::fs::create_dir_all(self.corpus_dir(corpus_id))?;
        let summary = match stage {
            Stage::Ingest => self.stage_ingest(corpus_id)?,
            Stage::Normalize => self.stage_normalize(corpus_id)?,
            Stage::Homonyms => self.stage_homonyms(corpus_id)?,
            Stage::Classify => self.stage_classify(corpus_id)?,
            Stage::Match => self.stage_match(corpus_id)?,
            Stage::Geocode => self.stage_geocode(corpus_id)?,
            Stage::Sample => self.stage_sample(corpus_id)?,
            Stage::Report => unreachable!(),
        };
        self.write_meta(corpus_id, stage, upstream)?;
        Ok(StageOutcome {
            stage: stage.name(),
            corpus_id: corpus_id.to_string(),
            noop: false,
            summary,
        })
    }

    fn fixture_path(&self, template: &Path, corpus_id: &str) -> PathBuf {
        PathBuf::from(
            template
                .display()
                .to_string()
                .replace("{corpus}", corpus_id),
        )
    }

    fn stage_ingest(&self, corpus_id: &str) -> Result<String, PipelineError> {
        let spec = self.config.corpus(corpus_id)?;
        build_query(spec)?;
        let cache = Cache::new(&self.config.general.cache_dir);
        let adapter = JsonPatentAdapter;
        let outcome = match self.config.backends.patents {
            BackendKind::Fixture => {
                let path = self
                    .config
                    .fixtures
                    .patents
                    .as_ref()
                    .ok_or_else(|| PipelineError::Invalid("patents fixture path missing".into()))?;
                fetch_patents(
                    spec,
                    PatentSource::Fixture(self.fixture_path(path, corpus_id)),
                    self.config.general.strict_parse,
                )?
            }
            BackendKind::Live => {
                let endpoint = self
                    .config
                    .endpoints
                    .patents
                    .clone()
                    .ok_or_else(|| PipelineError::Invalid("patents endpoint missing".into()))?;
                let transport = HttpTransport::new(
                    self.config.endpoints.rate_limit_rps,
                    self.config.endpoints.max_retries,
                );
                fetch_patents(
                    spec,
                    PatentSource::Live {
                        endpoint,
                        transport: &transport,
                        cache: &cache,
                        adapter: &adapter,
                    },
                    self.config.general.strict_parse,
                )?
            }
            BackendKind::Stub => {
                return Err(PipelineError::Invalid("patents backend cannot be 'stub'".into()))
            }
        };
        let n = outcome.records.len();
        let missing_abstracts = outcome.records.iter().filter(|r| !r.has_abstract()).count();
        self.write_jsonl(
            &self.corpus_dir(corpus_id).join("ingest.jsonl"),
            &outcome.records,
        )?;
        Ok(format!(
            "{} records in / {n} records out ({missing_abstracts} without abstract)",
            n + outcome.skipped
        ))
    }

    fn stage_normalize(&self, corpus_id: &str) -> Result<String, PipelineError> {
        let records: Vec<PatentRecord> =
            self.read_jsonl(&self.corpus_dir(corpus_id).join("ingest.jsonl"))?;
        let mut names: Vec<(String, String)> = Vec::new();
        for r in &records {
            for inv in &r.inventors_raw {
                names.push((inv.clone(), r.publication_number.clone()));
            }
        }
        let clusters = cluster_inventors(&names, self.config.thresholds.name_similarity);
        self.write_jsonl(&self.corpus_dir(corpus_id).join("normalize.jsonl"), &clusters)?;
        Ok(format!(
            "{} name occurrences in / {} inventor clusters out",
            names.len(),
            clusters.len()
        ))
    }

    fn stage_homonyms(&self, corpus_id: &str) -> Result<String, PipelineError> {
        let clusters: Vec<InventorCluster> =
            self.read_jsonl(&self.corpus_dir(corpus_id).join("normalize.jsonl"))?;
        let cache = Cache::new(&self.config.general.cache_dir);
        let max = self.config.general.max_publications;
        let sets: Vec<Result<HomonymSet, HomonymError>> = match self.config.backends.publications {
            BackendKind::Fixture => {
                let path = self.config.fixtures.publications.as_ref().ok_or_else(|| {
                    PipelineError::Invalid("publications fixture path missing".into())
                })?;
                let fixture = PublicationFixture::load(self.fixture_path(path, corpus_id))?;
                parallel_map(clusters.clone(), self.config.general.workers, |c| {
                    fetch_publications(&c, PublicationSource::Fixture(&fixture), max)
                })
            }
            BackendKind::Live => {
                let search = self.config.endpoints.publication_search.clone().ok_or_else(
                    || PipelineError::Invalid("publication_search endpoint missing".into()),
                )?;
                let fetch = self.config.endpoints.publication_fetch.clone().ok_or_else(
                    || PipelineError::Invalid("publication_fetch endpoint missing".into()),
                )?;
                let transport = HttpTransport::new(
                    self.config.endpoints.rate_limit_rps,
                    self.config.endpoints.max_retries,
                );
                let adapter = JsonPublicationAdapter;
                parallel_map(clusters.clone(), self.config.general.workers, |c| {
                    fetch_publications(
                        &c,
                        PublicationSource::Live {
                            search_endpoint: search.clone(),
                            fetch_endpoint: fetch.clone(),
                            transport: &transport,
                            cache: &cache,
                            adapter: &adapter,
                        },
                        max,
                    )
                })
            }
            BackendKind::Stub => {
                return Err(PipelineError::Invalid(
                    "publications backend cannot be 'stub'".into(),
                ))
            }
        };
        let sets: Vec<HomonymSet> = sets.into_iter().collect::<Result<_, _>>()?;
        let homonyms = sets.iter().filter(|s| s.is_homonym()).count();
        self.write_jsonl(&self.corpus_dir(corpus_id).join("homonyms.jsonl"), &sets)?;
        Ok(format!(
            "{} clusters in / {homonyms} with homonymous authors out",
            sets.len()
        ))
    }

    fn stage_classify(&self, corpus_id: &str) -> Result<String, PipelineError> {
        let sets: Vec<HomonymSet> =
            self.read_jsonl(&self.corpus_dir(corpus_id).join("homonyms.jsonl"))?;
        // classify each distinct publication with a non-empty abstract once
        let mut texts: BTreeMap<String, String> = BTreeMap::new();
        for set in &sets {
            for p in &set.publications {
                if p.has_abstract() {
                    texts.entry(p.pub_id.clone()).or_insert(p.abstract_text.clone());
                }
            }
        }
        let cache = Cache::new(&self.config.general.cache_dir);
        let lexicon = match self.config.backends.classifier {
            BackendKind::Stub => Some(load_lexicon(
                self.config
                    .fixtures
                    .lexicon
                    .as_ref()
                    .ok_or_else(|| PipelineError::Invalid("lexicon path missing".into()))?,
            )?),
            _ => None,
        };
        let endpoint = self.config.endpoints.classifier.clone();
        let transport = HttpTransport::new(
            self.config.endpoints.rate_limit_rps,
            self.config.endpoints.max_retries,
        );
        let adapter = JsonClassifierAdapter;
        let backend = match self.config.backends.classifier {
            BackendKind::Stub => ClassifierBackend::Stub(lexicon.as_ref().unwrap()),
            BackendKind::Live => ClassifierBackend::Remote {
                endpoint: endpoint
                    .ok_or_else(|| PipelineError::Invalid("classifier endpoint missing".into()))?,
                transport: &transport,
                cache: &cache,
                adapter: &adapter,
            },
            BackendKind::Fixture => {
                return Err(PipelineError::Invalid(
                    "classifier backend must be 'stub' or 'live'".into(),
                ))
            }
        };
        let items: Vec<(String, String)> = texts.into_iter().collect();
        let n_in = items.len();
        let results: Vec<Result<Classification, ClassifyError>> =
            parallel_map(items, self.config.general.workers, |(pub_id, text)| {
                classify_text(
                    &pub_id,
                    &text,
                    &backend,
                    self.config.thresholds.granularity,
                    self.config.thresholds.max_predictions,
                    self.config.thresholds.text_byte_cap,
                )
            });
        let classifications: Vec<Classification> = results.into_iter().collect::<Result<_, _>>()?;
        self.write_jsonl(
            &self.corpus_dir(corpus_id).join("classify.jsonl"),
            &classifications,
        )?;
        Ok(format!(
            "{n_in} abstracts in / {} classifications out",
            classifications.len()
        ))
    }

    fn stage_match(&self, corpus_id: &str) -> Result<String, PipelineError> {
        let dir = self.corpus_dir(corpus_id);
        let records: Vec<PatentRecord> = self.read_jsonl(&dir.join("ingest.jsonl"))?;
        let clusters: Vec<InventorCluster> = self.read_jsonl(&dir.join("normalize.jsonl"))?;
        let sets: Vec<HomonymSet> = self.read_jsonl(&dir.join("homonyms.jsonl"))?;
        let classifications: Vec<Classification> = self.read_jsonl(&dir.join("classify.jsonl"))?;

        let patents: BTreeMap<&str, &PatentRecord> = records
            .iter()
            .map(|r| (r.publication_number.as_str(), r))
            .collect();
        let by_text_ref: BTreeMap<&str, &Classification> = classifications
            .iter()
            .map(|c| (c.text_ref.as_str(), c))
            .collect();
        let sets_by_cluster: BTreeMap<&str, &HomonymSet> =
            sets.iter().map(|s| (s.cluster_id.as_str(), s)).collect();

        let threshold = self.config.thresholds.classifier_score;
        let prefix_len = self.config.thresholds.prefix_len;
        let mut decisions: Vec<MatchDecision> = Vec::new();
        for cluster in &clusters {
            let Some(set) = sets_by_cluster.get(cluster.cluster_id.as_str()) else {
                continue;
            };
            for publication in &set.publications {
                // publications without a classified abstract contribute no decision
                let Some(classification) = by_text_ref.get(publication.pub_id.as_str()) else {
                    continue;
                };
                for pn in &cluster.patent_refs {
                    let Some(patent) = patents.get(pn.as_str()) else {
                        continue;
                    };
                    if patent.ipc_codes.is_empty() {
                        continue;
                    }
                    decisions.push(decide_match(
                        &cluster.cluster_id,
                        &publication.pub_id,
                        pn,
                        &patent.ipc_codes,
                        classification,
                        threshold,
                        prefix_len,
                    ));
                }
            }
        }
        decisions.sort_by(|a, b| {
            (&a.cluster_id, &a.pub_id, &a.publication_number)
                .cmp(&(&b.cluster_id, &b.pub_id, &b.publication_number))
        });
        let canonicals: BTreeMap<String, String> = clusters
            .iter()
            .map(|c| (c.cluster_id.clone(), c.canonical.clone()))
            .collect();
        let candidates = aggregate_candidates(&decisions, &canonicals);
        self.write_jsonl(&dir.join("decisions.jsonl"), &decisions)?;
        self.write_jsonl(&dir.join("candidates.jsonl"), &candidates)?;
        Ok(format!(
            "{} decisions in / {} candidates out",
            decisions.len(),
            candidates.len()
        ))
    }

    fn stage_geocode(&self, corpus_id: &str) -> Result<String, PipelineError> {
        let dir = self.corpus_dir(corpus_id);
        let candidates: Vec<AuthorInventorCandidate> =
            self.read_jsonl(&dir.join("candidates.jsonl"))?;
        let sets: Vec<HomonymSet> = self.read_jsonl(&dir.join("homonyms.jsonl"))?;
        let sets_by_cluster: BTreeMap<&str, &HomonymSet> =
            sets.iter().map(|s| (s.cluster_id.as_str(), s)).collect();
        let cache = Cache::new(&self.config.general.cache_dir);
        let floor = self.config.general.geocode_confidence_floor;
        let fixture = match self.config.backends.geocoder {
            BackendKind::Fixture => {
                let path = self.config.fixtures.geocoder.as_ref().ok_or_else(|| {
                    PipelineError::Invalid("geocoder fixture path missing".into())
                })?;
                Some(GeoFixture::load(self.fixture_path(path, corpus_id))?)
            }
            _ => None,
        };
        let transport = HttpTransport::new(
            self.config.endpoints.rate_limit_rps,
            self.config.endpoints.max_retries,
        );
        let mut entries: Vec<GeoEntry> = Vec::new();
        let mut located = 0usize;
        for candidate in &candidates {
            // first matched publication carrying an affiliation
            let affiliation = sets_by_cluster
                .get(candidate.cluster_id.as_str())
                .and_then(|set| {
                    candidate.matched_publications.iter().find_map(|pid| {
                        set.publications
                            .iter()
                            .find(|p| &p.pub_id == pid)
                            .and_then(|p| p.affiliation.clone())
                            .filter(|a| !a.trim().is_empty())
                    })
                });
            let geo = affiliation.and_then(|addr| {
                let source = match (&fixture, &self.config.endpoints.geocoder) {
                    (Some(f), _) => GeoSource::Fixture(f),
                    (None, Some(endpoint)) => GeoSource::Live {
                        endpoint: endpoint.clone(),
                        transport: &transport,
                        cache: &cache,
                    },
                    (None, None) => return None,
                };
                geocode_affiliation(&addr, source, floor)
            });
            if geo.is_some() {
                located += 1;
            }
            entries.push(GeoEntry {
                cluster_id: candidate.cluster_id.clone(),
                geo,
            });
        }
        self.write_jsonl(&dir.join("geocode.jsonl"), &entries)?;
        Ok(format!(
            "{} candidates in / {located} geolocated out",
            candidates.len()
        ))
    }

    fn stage_sample(&self, corpus_id: &str) -> Result<String, PipelineError> {
        let dir = self.corpus_dir(corpus_id);
        let candidates: Vec<AuthorInventorCandidate> =
            self.read_jsonl(&dir.join("candidates.jsonl"))?;
        let ids: Vec<String> = candidates.iter().map(|c| c.cluster_id.clone()).collect();
        let sample = if ids.is_empty() {
            // an empty candidate list yields an empty sample artifact, not a failure
            QualificationSample {
                corpus_id: corpus_id.to_string(),
                sampled_cluster_ids: Vec::new(),
                params: self.config.sampling.clone(),
                verdicts: BTreeMap::new(),
                audit: Vec::new(),
            }
        } else {
            draw_sample(corpus_id, &ids, &self.config.sampling)?
        };
        atomic_write(
            &dir.join("sample.json"),
            serde_json::to_string_pretty(&sample)?.as_bytes(),
        )?;
        Ok(format!(
            "{} candidates in / {} sampled out (seed {})",
            ids.len(),
            sample.sampled_cluster_ids.len(),
            sample.params.seed
        ))
    }

    fn load_sample(&self, corpus_id: &str) -> Result<QualificationSample, PipelineError> {
        let path = self.corpus_dir(corpus_id).join("sample.json");
        let text = std::fs::read_to_string(&path)
            .map_err(|_| PipelineError::MissingArtifact(path.display().to_string()))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Record a verdict for a sampled candidate; the sample artifact and
    /// its meta are rewritten atomically.
    pub fn apply_verdict(
        &self,
        corpus_id: &str,
        cluster_id: &str,
        verdict: Verdict,
    ) -> Result<(), PipelineError> {
        let mut sample = self.load_sample(corpus_id)?;
        record_verdict(&mut sample, cluster_id, verdict)?;
        atomic_write(
            &self.corpus_dir(corpus_id).join("sample.json"),
            serde_json::to_string_pretty(&sample)?.as_bytes(),
        )?;
        let upstream = self.check_upstream(corpus_id, Stage::Sample)?;
        self.write_meta(corpus_id, Stage::Sample, upstream)?;
        Ok(())
    }

    /// Compute the qualification report across every configured corpus.
    pub fn build_full_report(&self) -> Result<QualificationReport, PipelineError> {
        let mut entries = Vec::new();
        for spec in &self.config.corpora {
            let corpus_id = &spec.corpus_id;
            for stage in Stage::Report.upstream() {
                let meta = self.load_meta(corpus_id, *stage).ok_or_else(|| {
                    PipelineError::MissingArtifact(format!("{corpus_id}/{}", stage.name()))
                })?;
                if !self.meta_is_valid(corpus_id, &meta) {
                    return Err(PipelineError::StaleUpstream(format!(
                        "{corpus_id}/{}",
                        stage.name()
                    )));
                }
            }
            let dir = self.corpus_dir(corpus_id);
            let records: Vec<PatentRecord> = self.read_jsonl(&dir.join("ingest.jsonl"))?;
            let clusters: Vec<InventorCluster> = self.read_jsonl(&dir.join("normalize.jsonl"))?;
            let sets: Vec<HomonymSet> = self.read_jsonl(&dir.join("homonyms.jsonl"))?;
            let candidates: Vec<AuthorInventorCandidate> =
                self.read_jsonl(&dir.join("candidates.jsonl"))?;
            let sample = self.load_sample(corpus_id)?;
            let stats = compute_corpus_stats(
                corpus_id,
                records.len(),
                clusters.len(),
                sets.iter().filter(|s| s.is_homonym()).count(),
                candidates.len(),
            )?;
            entries.push((stats, VerdictCounts::from_sample(&sample)));
        }
        Ok(build_report(&entries)?)
    }

    pub fn run_report(&self, force: bool) -> Result<StageOutcome, PipelineError> {
        // upstream hashes over every corpus's report inputs
        let mut upstream = BTreeMap::new();
        for spec in &self.config.corpora {
            for stage in Stage::Report.upstream() {
                let meta = self.load_meta(&spec.corpus_id, *stage).ok_or_else(|| {
                    PipelineError::UpstreamMissing(format!("{}/{}", spec.corpus_id, stage.name()))
                })?;
                if !self.meta_is_valid(&spec.corpus_id, &meta) {
                    return Err(PipelineError::StaleUpstream(format!(
                        "{}/{}",
                        spec.corpus_id,
                        stage.name()
                    )));
                }
                upstream.insert(
                    format!("{}/{}", spec.corpus_id, stage.name()),
                    meta.stage_hash(),
                );
            }
        }
        if !force && self.up_to_date("all", Stage::Report, &upstream) {
            return Ok(StageOutcome {
                stage: "report",
                corpus_id: "all".into(),
                noop: true,
                summary: "up to date".into(),
            });
        }
        let report = self.build_full_report()?;
        let dir = &self.config.general.artifacts_dir;
        atomic_write(&dir.join("report.txt"), report.render_text().as_bytes())?;
        atomic_write(
            &dir.join("report.json"),
            serde_json::to_string_pretty(&report)?.as_bytes(),
        )?;
        self.write_meta("all", Stage::Report, upstream)?;
        Ok(StageOutcome {
            stage: "report",
            corpus_id: "all".into(),
            noop: false,
            summary: format!(
                "{} corpora in / totals: sample {}, verified {}, doubt {}, error {}, pending {}",
                report.rows.len(),
                report.totals.sample,
                report.totals.verified,
                report.totals.doubt,
                report.totals.error,
                report.totals.pending
            ),
        })
    }

    /// Run every stage for every corpus (or one corpus), then the report.
    pub fn run_all(
        &self,
        corpus: Option<&str>,
        force: bool,
    ) -> Result<Vec<StageOutcome>, PipelineError> {
        let ids: Vec<String> = match corpus {
            Some(id) => vec![self.config.corpus(id)?.corpus_id.clone()],
            None => self.config.corpora.iter().map(|c| c.corpus_id.clone()).collect(),
        };
        let mut outcomes = Vec::new();
        for id in &ids {
            for stage in Stage::CHAIN.iter().take(7) {
                outcomes.push(self.run_stage(id, *stage, force)?);
            }
        }
        if corpus.is_none() || self.config.corpora.len() == 1 {
            outcomes.push(self.run_report(force)?);
        }
        Ok(outcomes)
    }
}

/// Order-preserving parallel map over a bounded worker pool. Results are
/// reassembled by input index, so the worker count never changes output.
pub fn parallel_map<T, R, F>(items: Vec<T>, workers: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync,
{
    if workers <= 1 || items.len() <= 1 {
        return items.into_iter().map(f).collect();
    }
    let queue: Mutex<std::vec::IntoIter<(usize, T)>> =
        Mutex::new(items.into_iter().enumerate().collect::<Vec<_>>().into_iter());
    let results: Mutex<Vec<(usize, R)>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let next = queue.lock().unwrap().next();
                match next {
                    Some((i, item)) => {
                        let r = f(item);
                        results.lock().unwrap().push((i, r));
                    }
                    None => break,
                }
            });
        }
    });
    let mut out = results.into_inner().unwrap();
    out.sort_by_key(|(i, _)| *i);
    out.into_iter().map(|(_, r)| r).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_map_preserves_order() {
        let items: Vec<u32> = (0..100).collect();
        let seq = parallel_map(items.clone(), 1, |x| x * 2);
        let par = parallel_map(items, 8, |x| x * 2);
        assert_eq!(seq, par);
    }

    #[test]
    fn stage_names_round_trip() {
        for stage in Stage::CHAIN {
            assert_eq!(Stage::from_name(stage.name()), Some(stage));
        }
        assert_eq!(Stage::from_name("bogus"), None);
    }

    #[test]
    fn dag_upstreams_precede_their_stage() {
        let position = |s: Stage| Stage::CHAIN.iter().position(|x| *x == s).unwrap();
        for stage in Stage::CHAIN {
            for up in stage.upstream() {
                assert!(position(*up) < position(stage));
            }
        }
    }
}
