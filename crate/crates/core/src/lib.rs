//! Inventor-author disambiguation pipeline.
//!
//! Clusters patent inventor name variants, retrieves homonymous authors'
//! publications from a bibliographic service, matches publication abstracts
//! to patents through IPC categorization scores, and qualifies the results
//! with seeded random sampling and margin-of-error reporting. Every
//! external service can be replayed from fixtures, so full runs are
//! deterministic and offline-testable.

pub mod cache;
pub mod classify;
pub mod config;
pub mod corpus;
pub mod demo;
pub mod homonyms;
pub mod ipc;
pub mod matching;
pub mod names;
pub mod pipeline;
pub mod qualify;
pub mod query;
pub mod transport;

pub use cache::Cache;
pub use classify::{classify_text, load_lexicon, Classification, Granularity, IpcPrediction, StubLexicon};
pub use config::{BackendKind, PipelineConfig};
pub use corpus::{fetch_patents, parse_ipc, PatentRecord, PatentSource};
pub use homonyms::{
    build_author_query, fetch_publications, geocode_affiliation, GeoPoint, HomonymSet, Publication,
};
pub use ipc::IpcCode;
pub use matching::{
    aggregate_candidates, compute_corpus_stats, decide_match, AuthorInventorCandidate,
    CorpusStats, MatchDecision,
};
pub use names::{cluster_inventors, fold_name, similarity, InventorCluster, NameVariant};
pub use pipeline::{Pipeline, PipelineError, Stage, StageOutcome};
pub use qualify::{
    build_report, draw_sample, margin_of_error, record_verdict, required_sample_size,
    QualificationReport, QualificationSample, SamplingMode, SamplingParams, Verdict, VerdictCounts,
};
pub use query::{build_query, validate_query, CorpusSpec};
