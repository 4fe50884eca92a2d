//! Qualification of the match results: seeded random sampling of the
//! candidate list, manual verdict recording, margin-of-error arithmetic
//! with finite-population correction, and the two report tables.

use crate::matching::CorpusStats;
use rand::seq::index::sample as index_sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QualifyError {
    #[error("invalid sampling params: {0}")]
    InvalidParams(String),
    #[error("no candidates to sample")]
    EmptyCandidates,
    #[error("cluster id '{0}' is not in the sample")]
    UnknownClusterId(String),
    #[error("invalid verdict '{0}'")]
    InvalidVerdict(String),
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("verdict counts do not add up: {0}")]
    Conservation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    Fraction,
    TargetMargin,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SamplingParams {
    pub mode: SamplingMode,
    pub fraction: f64,
    pub z: f64,
    pub p: f64,
    pub e_target: f64,
    pub seed: u64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            mode: SamplingMode::Fraction,
            fraction: 0.10,
            z: 1.96,
            p: 0.5,
            e_target: 0.05,
            seed: 0,
        }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<(), QualifyError> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(QualifyError::InvalidParams("fraction must be in (0, 1]".into()));
        }
        if !(self.z > 0.0) {
            return Err(QualifyError::InvalidParams("z must be positive".into()));
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(QualifyError::InvalidParams("p must be in (0, 1)".into()));
        }
        if !(self.e_target > 0.0 && self.e_target < 1.0) {
            return Err(QualifyError::InvalidParams("e_target must be in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Verified,
    Doubt,
    Error,
    Pending,
}

impl std::str::FromStr for Verdict {
    type Err = QualifyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "verified" => Ok(Verdict::Verified),
            "doubt" => Ok(Verdict::Doubt),
            "error" => Ok(Verdict::Error),
            other => Err(QualifyError::InvalidVerdict(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AuditEntry {
    pub cluster_id: String,
    pub previous: Verdict,
    pub at: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct QualificationSample {
    pub corpus_id: String,
    pub sampled_cluster_ids: Vec<String>,
    pub params: SamplingParams,
    pub verdicts: BTreeMap<String, Verdict>,
    #[serde(default)]
    pub audit: Vec<AuditEntry>,
}

/// Sample size needed for a target margin `e` at confidence quantile `z`
/// and assumed proportion `p`, with finite-population correction:
/// `n = ceil(n0 / (1 + (n0 - 1)/N))`, `n0 = z^2 p (1-p) / e^2`.
pub fn required_sample_size(n_pop: usize, e: f64, z: f64, p: f64) -> Result<usize, QualifyError> {
    if n_pop < 1 {
        return Err(QualifyError::InvalidParams("population must be >= 1".into()));
    }
    if !(e > 0.0 && e < 1.0) || !(z > 0.0) || !(p > 0.0 && p < 1.0) {
        return Err(QualifyError::InvalidParams(
            "need 0 < e < 1, z > 0, 0 < p < 1".into(),
        ));
    }
    let n0 = z * z * p * (1.0 - p) / (e * e);
    let n = (n0 / (1.0 + (n0 - 1.0) / n_pop as f64)).ceil() as usize;
    Ok(n.clamp(1, n_pop))
}

/// Margin of error of a sample of `n` from a population of `n_pop`:
/// `z * sqrt(p(1-p)/n) * sqrt((N-n)/(N-1))`. A full census has margin 0.
pub fn margin_of_error(n: usize, n_pop: usize, z: f64, p: f64) -> Result<f64, QualifyError> {
    if n < 1 || n > n_pop {
        return Err(QualifyError::InvalidParams(format!(
            "need 1 <= n <= N, got n={n}, N={n_pop}"
        )));
    }
    if n_pop == 1 {
        return Ok(0.0);
    }
    let fpc = ((n_pop - n) as f64 / (n_pop - 1) as f64).sqrt();
    Ok(z * (p * (1.0 - p) / n as f64).sqrt() * fpc)
}

/// Seeded uniform draw without replacement from the candidate ids.
/// Fraction mode takes `max(1, round(fraction * n))`; target-margin mode
/// takes the finite-population-corrected size, capped at the population.
pub fn draw_sample(
    corpus_id: &str,
    candidate_ids: &[String],
    params: &SamplingParams,
) -> Result<QualificationSample, QualifyError> {
    params.validate()?;
    if candidate_ids.is_empty() {
        return Err(QualifyError::EmptyCandidates);
    }
    let n = candidate_ids.len();
    let size = match params.mode {
        SamplingMode::Fraction => ((params.fraction * n as f64).round() as usize).max(1).min(n),
        SamplingMode::TargetMargin => {
            required_sample_size(n, params.e_target, params.z, params.p)?.min(n)
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut sampled: Vec<String> = index_sample(&mut rng, n, size)
        .into_iter()
        .map(|i| candidate_ids[i].clone())
        .collect();
    sampled.sort();
    let verdicts = sampled
        .iter()
        .map(|id| (id.clone(), Verdict::Pending))
        .collect();
    Ok(QualificationSample {
        corpus_id: corpus_id.to_string(),
        sampled_cluster_ids: sampled,
        params: params.clone(),
        verdicts,
        audit: Vec::new(),
    })
}

/// Record (or overwrite, with an audit entry) the verdict for a sampled
/// cluster. Only Verified/Doubt/Error may be recorded.
pub fn record_verdict(
    sample: &mut QualificationSample,
    cluster_id: &str,
    verdict: Verdict,
) -> Result<(), QualifyError> {
    if verdict == Verdict::Pending {
        return Err(QualifyError::InvalidVerdict("pending".into()));
    }
    let slot = sample
        .verdicts
        .get_mut(cluster_id)
        .ok_or_else(|| QualifyError::UnknownClusterId(cluster_id.to_string()))?;
    let previous = *slot;
    sample.audit.push(AuditEntry {
        cluster_id: cluster_id.to_string(),
        previous,
        at: chrono::Utc::now().to_rfc3339(),
    });
    *slot = verdict;
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct VerdictCounts {
    pub sample: usize,
    pub verified: usize,
    pub doubt: usize,
    pub error: usize,
    pub pending: usize,
}

impl VerdictCounts {
    pub fn from_sample(sample: &QualificationSample) -> VerdictCounts {
        let mut c = VerdictCounts {
            sample: sample.sampled_cluster_ids.len(),
            ..Default::default()
        };
        for v in sample.verdicts.values() {
            match v {
                Verdict::Verified => c.verified += 1,
                Verdict::Doubt => c.doubt += 1,
                Verdict::Error => c.error += 1,
                Verdict::Pending => c.pending += 1,
            }
        }
        c
    }

    fn check(&self, corpus_id: &str) -> Result<(), QualifyError> {
        if self.verified + self.doubt + self.error + self.pending != self.sample {
            return Err(QualifyError::Conservation(format!(
                "{corpus_id}: {} + {} + {} + {} != {}",
                self.verified, self.doubt, self.error, self.pending, self.sample
            )));
        }
        Ok(())
    }

    pub fn verified_display(&self) -> String {
        if self.sample == 0 {
            return "0".to_string();
        }
        let pct = (100.0 * self.verified as f64 / self.sample as f64).round() as u64;
        format!("{} ({pct} %)", self.verified)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct QualificationReport {
    pub rows: Vec<(CorpusStats, VerdictCounts)>,
    pub totals: VerdictCounts,
    pub total_inventors: usize,
    pub total_candidates: usize,
}

/// Assemble the qualification report from per-corpus stats and verdict
/// counts. The totals row is the column sums.
pub fn build_report(
    entries: &[(CorpusStats, VerdictCounts)],
) -> Result<QualificationReport, QualifyError> {
    let mut totals = VerdictCounts::default();
    let mut total_inventors = 0;
    let mut total_candidates = 0;
    for (stats, counts) in entries {
        counts.check(&stats.corpus_id)?;
        totals.sample += counts.sample;
        totals.verified += counts.verified;
        totals.doubt += counts.doubt;
        totals.error += counts.error;
        totals.pending += counts.pending;
        total_inventors += stats.n_inventors;
        total_candidates += stats.n_candidates;
    }
    Ok(QualificationReport {
        rows: entries.to_vec(),
        totals,
        total_inventors,
        total_candidates,
    })
}

impl QualificationReport {
    /// Aligned plain-text rendering of the qualification table and the
    /// proportion-inference table, corpora as columns.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let names: Vec<String> = self
            .rows
            .iter()
            .map(|(s, _)| s.corpus_id.clone())
            .collect();

        // qualification table
        let mut header = vec!["Corpus".to_string()];
        header.extend(names.iter().cloned());
        header.push("Total".to_string());
        let any_pending = self.rows.iter().any(|(_, c)| c.pending > 0) || self.totals.pending > 0;
        let mut table: Vec<Vec<String>> = vec![header];
        let row = |label: &str, f: &dyn Fn(&VerdictCounts) -> String, total: String| {
            let mut r = vec![label.to_string()];
            r.extend(self.rows.iter().map(|(_, c)| f(c)));
            r.push(total);
            r
        };
        table.push({
            let mut r = vec!["Inventors".to_string()];
            r.extend(self.rows.iter().map(|(s, _)| s.n_inventors.to_string()));
            r.push(self.total_inventors.to_string());
            r
        });
        table.push({
            let mut r = vec!["Candidates".to_string()];
            r.extend(self.rows.iter().map(|(s, _)| s.n_candidates.to_string()));
            r.push(self.total_candidates.to_string());
            r
        });
        table.push(row(
            "Sample",
            &|c| c.sample.to_string(),
            self.totals.sample.to_string(),
        ));
        table.push(row(
            "Verified",
            &|c| c.verified_display(),
            self.totals.verified_display(),
        ));
        table.push(row("Doubt", &|c| c.doubt.to_string(), self.totals.doubt.to_string()));
        table.push(row("Error", &|c| c.error.to_string(), self.totals.error.to_string()));
        if any_pending {
            table.push(row(
                "Pending",
                &|c| c.pending.to_string(),
                self.totals.pending.to_string(),
            ));
        }
        out.push_str("Qualification of candidate samples\n");
        out.push_str(&render_aligned(&table));

        // proportion-inference table
        let mut table2: Vec<Vec<String>> = Vec::new();
        let mut header2 = vec!["Corpus".to_string()];
        header2.extend(names);
        table2.push(header2);
        let row2 = |label: &str, f: &dyn Fn(&CorpusStats) -> String| {
            let mut r = vec![label.to_string()];
            r.extend(self.rows.iter().map(|(s, _)| f(s)));
            r
        };
        table2.push(row2("Patents", &|s| s.n_patents.to_string()));
        table2.push(row2("Inventors", &|s| s.n_inventors.to_string()));
        table2.push(row2("Homonym authors", &|s| s.n_homonyms.to_string()));
        table2.push(row2("Candidates", &|s| s.n_candidates.to_string()));
        table2.push(row2("Proportion matched (%)", &|s| s.proportion_display()));
        out.push_str("\nInference of author-inventor proportions\n");
        out.push_str(&render_aligned(&table2));
        out
    }
}

fn render_aligned(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    let mut widths = vec![0usize; cols];
    for r in rows {
        for (i, cell) in r.iter().enumerate() {
            widths[i] = widths[i].max(cell.chars().count());
        }
    }
    let mut out = String::new();
    for r in rows {
        let mut line = String::new();
        for (i, cell) in r.iter().enumerate() {
            let pad = widths[i] - cell.chars().count();
            line.push_str(cell);
            if i + 1 < r.len() {
                line.push_str(&" ".repeat(pad + 2));
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}
