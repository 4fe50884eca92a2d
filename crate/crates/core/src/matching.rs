//! The disambiguation decision: a publication matches a patent when some
//! IPC prediction both exceeds the score threshold (strictly) and shares
//! an IPC prefix with the patent's own codes.

use crate::classify::Classification;
use crate::homonyms::GeoPoint;
use crate::ipc::IpcCode;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

pub const DEFAULT_SCORE_THRESHOLD: u64 = 800;
pub const DEFAULT_PREFIX_LEN: usize = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StatsError {
    #[error("missing stage artifact: {0}")]
    MissingStageArtifact(String),
    #[error("inconsistent counts: {0}")]
    InconsistentCounts(String),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct MatchDecision {
    pub cluster_id: String,
    pub pub_id: String,
    pub publication_number: String,
    pub matched: bool,
    pub overlapping_codes: Vec<String>,
    pub best_score: u64,
    pub threshold_used: u64,
    pub prefix_len_used: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AuthorInventorCandidate {
    pub cluster_id: String,
    pub matched_publications: Vec<String>,
    pub evidence: Vec<MatchDecision>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geo: Option<GeoPoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CorpusStats {
    pub corpus_id: String,
    pub n_patents: usize,
    pub n_inventors: usize,
    pub n_homonyms: usize,
    pub n_candidates: usize,
    /// `round_2(100 * n_candidates / n_homonyms)`; None when there are no
    /// homonyms (rendered as an em dash).
    pub proportion_matched: Option<f64>,
}

impl CorpusStats {
    pub fn proportion_display(&self) -> String {
        match self.proportion_matched {
            Some(p) => format!("{p:.2}"),
            None => "—".to_string(),
        }
    }
}

/// Apply the match rule for one (patent, classification) pair: matched iff
/// some prediction scores strictly above the threshold and its code prefix
/// appears among the patent's code prefixes.
pub fn decide_match(
    cluster_id: &str,
    pub_id: &str,
    publication_number: &str,
    patent_codes: &[IpcCode],
    classification: &Classification,
    threshold: u64,
    prefix_len: usize,
) -> MatchDecision {
    let patent_prefixes: BTreeSet<String> =
        patent_codes.iter().map(|c| c.prefix(prefix_len)).collect();
    let mut overlapping: BTreeSet<String> = BTreeSet::new();
    let mut best_score = 0u64;
    for p in &classification.predictions {
        if p.score > threshold {
            let prefix = p.code.prefix(prefix_len);
            if patent_prefixes.contains(&prefix) {
                best_score = best_score.max(p.score);
                overlapping.insert(prefix);
            }
        }
    }
    MatchDecision {
        cluster_id: cluster_id.to_string(),
        pub_id: pub_id.to_string(),
        publication_number: publication_number.to_string(),
        matched: !overlapping.is_empty(),
        overlapping_codes: overlapping.into_iter().collect(),
        best_score,
        threshold_used: threshold,
        prefix_len_used: prefix_len,
    }
}

/// Group matched decisions into one candidate per cluster (a single
/// matched publication suffices). `canonical_by_cluster` fixes the output
/// order; clusters absent from it sort after the rest by id.
pub fn aggregate_candidates(
    decisions: &[MatchDecision],
    canonical_by_cluster: &BTreeMap<String, String>,
) -> Vec<AuthorInventorCandidate> {
    let mut by_cluster: BTreeMap<String, Vec<&MatchDecision>> = BTreeMap::new();
    for d in decisions.iter().filter(|d| d.matched) {
        by_cluster.entry(d.cluster_id.clone()).or_default().push(d);
    }
    let mut candidates: Vec<AuthorInventorCandidate> = by_cluster
        .into_iter()
        .map(|(cluster_id, ds)| {
            let mut matched_publications: Vec<String> =
                ds.iter().map(|d| d.pub_id.clone()).collect();
            matched_publications.sort();
            matched_publications.dedup();
            let mut evidence: Vec<MatchDecision> = ds.into_iter().cloned().collect();
            evidence.sort_by(|a, b| {
                (&a.pub_id, &a.publication_number).cmp(&(&b.pub_id, &b.publication_number))
            });
            AuthorInventorCandidate {
                cluster_id,
                matched_publications,
                evidence,
                geo: None,
            }
        })
        .collect();
    candidates.sort_by(|a, b| {
        let ka = (canonical_by_cluster.get(&a.cluster_id), &a.cluster_id);
        let kb = (canonical_by_cluster.get(&b.cluster_id), &b.cluster_id);
        match (ka.0, kb.0) {
            (Some(x), Some(y)) => x.cmp(y).then(ka.1.cmp(kb.1)),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => ka.1.cmp(kb.1),
        }
    });
    candidates
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

pub fn compute_corpus_stats(
    corpus_id: &str,
    n_patents: usize,
    n_inventors: usize,
    n_homonyms: usize,
    n_candidates: usize,
) -> Result<CorpusStats, StatsError> {
    if n_candidates > n_homonyms || n_homonyms > n_inventors {
        return Err(StatsError::InconsistentCounts(format!(
            "candidates {n_candidates} <= homonyms {n_homonyms} <= inventors {n_inventors} violated"
        )));
    }
    let proportion_matched = if n_homonyms == 0 {
        None
    } else {
        Some(round2(100.0 * n_candidates as f64 / n_homonyms as f64))
    };
    Ok(CorpusStats {
        corpus_id: corpus_id.to_string(),
        n_patents,
        n_inventors,
        n_homonyms,
        n_candidates,
        proportion_matched,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::IpcPrediction;

    fn codes(symbols: &[&str]) -> Vec<IpcCode> {
        symbols.iter().map(|s| IpcCode::parse(s).unwrap()).collect()
    }

    fn classification(preds: &[(&str, u64)]) -> Classification {
        Classification {
            text_ref: "p".into(),
            predictions: preds
                .iter()
                .map(|(c, s)| IpcPrediction {
                    code: IpcCode::parse(c).unwrap(),
                    score: *s,
                })
                .collect(),
            classifier_id: "stub".into(),
        }
    }

    #[test]
    fn overlap_above_threshold_matches() {
        let d = decide_match(
            "c",
            "p",
            "pn",
            &codes(&["A61K31/00", "A61P35/00"]),
            &classification(&[("A61K", 900)]),
            800,
            4,
        );
        assert!(d.matched);
        assert_eq!(d.overlapping_codes, vec!["A61K"]);
        assert_eq!(d.best_score, 900);
    }

    #[test]
    fn score_equal_to_threshold_never_matches() {
        let d = decide_match(
            "c",
            "p",
            "pn",
            &codes(&["A61K31/00"]),
            &classification(&[("A61K", 800)]),
            800,
            4,
        );
        assert!(!d.matched);
        assert_eq!(d.best_score, 0);
    }

    #[test]
    fn disjoint_subclasses_do_not_match() {
        let d = decide_match(
            "c",
            "p",
            "pn",
            &codes(&["A61K31/00"]),
            &classification(&[("C07D209/00", 950)]),
            800,
            4,
        );
        assert!(!d.matched);
    }

    #[test]
    fn empty_classification_is_unmatched() {
        let d = decide_match("c", "p", "pn", &codes(&["A61K"]), &classification(&[]), 800, 4);
        assert!(!d.matched);
        assert!(d.overlapping_codes.is_empty());
    }

    #[test]
    fn candidates_group_by_cluster() {
        let mk = |cluster: &str, pub_id: &str, matched: bool| MatchDecision {
            cluster_id: cluster.into(),
            pub_id: pub_id.into(),
            publication_number: "pn".into(),
            matched,
            overlapping_codes: if matched { vec!["A61K".into()] } else { vec![] },
            best_score: if matched { 900 } else { 0 },
            threshold_used: 800,
            prefix_len_used: 4,
        };
        let decisions = vec![
            mk("X", "p3", true),
            mk("X", "p2", false),
            mk("X", "p1", true),
            mk("Y", "p9", false),
        ];
        let canonicals: BTreeMap<String, String> =
            [("X".to_string(), "A".to_string()), ("Y".to_string(), "B".to_string())]
                .into_iter()
                .collect();
        let cands = aggregate_candidates(&decisions, &canonicals);
        assert_eq!(cands.len(), 1);
        assert_eq!(cands[0].matched_publications, vec!["p1", "p3"]);
        assert_eq!(cands[0].evidence.len(), 2);
    }

    #[test]
    fn all_unmatched_gives_no_candidates() {
        assert!(aggregate_candidates(&[], &BTreeMap::new()).is_empty());
    }

    #[test]
    fn stats_proportions() {
        let s = compute_corpus_stats("LargeBis", 3122, 4510, 1765, 1265).unwrap();
        assert_eq!(s.proportion_matched, Some(71.67));
        let s = compute_corpus_stats("Large", 874, 1088, 182, 27).unwrap();
        assert_eq!(s.proportion_matched, Some(14.84));
        let s = compute_corpus_stats("empty", 0, 0, 0, 0).unwrap();
        assert_eq!(s.proportion_matched, None);
        assert_eq!(s.proportion_display(), "—");
    }

    #[test]
    fn stats_reject_inconsistent_counts() {
        assert!(compute_corpus_stats("x", 1, 1, 2, 1).is_err());
        assert!(compute_corpus_stats("x", 1, 5, 2, 3).is_err());
    }
}
