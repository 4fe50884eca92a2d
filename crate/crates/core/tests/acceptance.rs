//! Acceptance suite: one test per acceptance criterion, each printing a
//! single PASS/FAIL line (visible with `--nocapture` or on failure).
//!
//! Run with: cargo test -p linker-core --test acceptance

use linker_core::classify::{Classification, IpcPrediction};
use linker_core::config::PipelineConfig;
use linker_core::ipc::IpcCode;
use linker_core::matching::{compute_corpus_stats, decide_match};
use linker_core::names::{cluster_inventors, fold_name, similarity};
use linker_core::pipeline::{Pipeline, Stage};
use linker_core::qualify::{
    build_report, draw_sample, margin_of_error, record_verdict, required_sample_size,
    SamplingMode, SamplingParams, Verdict, VerdictCounts,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, resume_unwind, UnwindSafe};
use std::path::Path;

fn criterion<F: FnOnce() + UnwindSafe>(num: usize, name: &str, f: F) {
    let result = catch_unwind(f);
    match &result {
        Ok(()) => println!("ACCEPTANCE {num} ({name}): PASS"),
        Err(_) => println!("ACCEPTANCE {num} ({name}): FAIL"),
    }
    if let Err(e) = result {
        resume_unwind(e);
    }
}

/// The reference qualification table used as the golden for criteria 1-3.
fn reference_entries() -> Vec<(linker_core::CorpusStats, VerdictCounts)> {
    vec![
        (
            compute_corpus_stats("Univ", 683, 2122, 1591, 1209).unwrap(),
            VerdictCounts { sample: 137, verified: 133, doubt: 3, error: 1, pending: 0 },
        ),
        (
            compute_corpus_stats("Large", 874, 1088, 182, 27).unwrap(),
            VerdictCounts { sample: 8, verified: 8, doubt: 0, error: 0, pending: 0 },
        ),
        (
            compute_corpus_stats("LargeBis", 3122, 4510, 1765, 1265).unwrap(),
            VerdictCounts { sample: 244, verified: 231, doubt: 12, error: 1, pending: 0 },
        ),
    ]
}

#[test]
fn criterion_1_qualification_table_totals() {
    criterion(1, "qualification table golden totals", || {
        let report = build_report(&reference_entries()).unwrap();
        assert_eq!(report.total_inventors, 7720);
        assert_eq!(report.totals.doubt, 15);
        assert_eq!(report.totals.error, 2);
        let text = report.render_text();
        assert!(text.contains("133 (97 %)"));
        assert!(text.contains("231 (95 %)"));
        // published totals row of the reference table
        assert_eq!(report.totals.sample, 390);
        assert_eq!(report.totals.verified, 373);
        assert_eq!(report.totals.verified_display(), "373 (96 %)");
    });
}

#[test]
fn criterion_2_proportion_table() {
    criterion(2, "author-inventor proportion golden", || {
        let report = build_report(&reference_entries()).unwrap();
        let large_bis = &report.rows[2].0;
        assert_eq!(large_bis.n_candidates, 1265);
        assert_eq!(large_bis.n_homonyms, 1765);
        assert_eq!(large_bis.proportion_matched, Some(71.67));
        assert!(report.render_text().contains("71.67"));
    });
}

#[test]
fn criterion_3_margin_of_error() {
    criterion(3, "margin of error at the reference sample", || {
        let e = margin_of_error(390, 2501, 1.96, 0.5).unwrap();
        assert!((e - 0.0456).abs() < 0.0005, "margin {e} not within 0.0456 +/- 0.0005");
        assert!(e < 0.05);
        assert_eq!(required_sample_size(2501, 0.05, 1.96, 0.5).unwrap(), 334);
    });
}

fn random_code(rng: &mut StdRng, granularity_full: bool) -> IpcCode {
    let section = (b'A' + rng.gen_range(0..8)) as char;
    let class = rng.gen_range(1..=99u8);
    let subclass = (b'A' + rng.gen_range(0..26)) as char;
    let text = if granularity_full && rng.gen_bool(0.7) {
        format!(
            "{section}{class:02}{subclass}{}/{:02}",
            rng.gen_range(1..=999u32),
            rng.gen_range(0..=99u32)
        )
    } else {
        format!("{section}{class:02}{subclass}")
    };
    IpcCode::parse(&text).unwrap()
}

/// Independent pairwise re-derivation of the match rule, structured as a
/// full cross product instead of a prefix-set lookup.
fn oracle_decide(
    patent_codes: &[IpcCode],
    preds: &[(IpcCode, u64)],
    threshold: u64,
    prefix_len: usize,
) -> (bool, Vec<String>, u64) {
    let mut overlapping = BTreeSet::new();
    let mut best = 0u64;
    for pc in patent_codes {
        for (code, score) in preds {
            if *score > threshold && code.prefix(prefix_len) == pc.prefix(prefix_len) {
                overlapping.insert(code.prefix(prefix_len));
                best = best.max(*score);
            }
        }
    }
    (
        !overlapping.is_empty(),
        overlapping.into_iter().collect(),
        best,
    )
}

#[test]
fn criterion_4_match_rule_against_pairwise_oracle() {
    criterion(4, "match rule vs exhaustive pairwise oracle", || {
        let mut rng = StdRng::seed_from_u64(0x4ACC);
        let mut matched_seen = 0usize;
        for case in 0..10_000usize {
            let threshold = *[0u64, 500, 799, 800, 801, 1000, 2000]
                .get(rng.gen_range(0..7))
                .unwrap();
            let prefix_len = rng.gen_range(1..=8usize);
            let n_codes = rng.gen_range(1..=6usize);
            let patent_codes: Vec<IpcCode> =
                (0..n_codes).map(|_| random_code(&mut rng, true)).collect();
            let n_preds = rng.gen_range(0..=10usize);
            let preds: Vec<(IpcCode, u64)> = (0..n_preds)
                .map(|_| {
                    // bias toward reuse of patent subclasses so overlaps occur
                    let code = if rng.gen_bool(0.5) {
                        patent_codes[rng.gen_range(0..n_codes)].clone()
                    } else {
                        random_code(&mut rng, false)
                    };
                    // boundary scores (exactly the threshold) are exercised
                    let score = *[0u64, 100, 799, 800, 801, 900, 1500, 2000]
                        .get(rng.gen_range(0..8))
                        .unwrap();
                    (code, score)
                })
                .collect();
            let classification = Classification {
                text_ref: format!("t{case}"),
                predictions: preds
                    .iter()
                    .map(|(c, s)| IpcPrediction { code: c.clone(), score: *s })
                    .collect(),
                classifier_id: "oracle-test".into(),
            };
            let got = decide_match(
                "c", "p", "pn", &patent_codes, &classification, threshold, prefix_len,
            );
            let (want_matched, want_codes, want_best) =
                oracle_decide(&patent_codes, &preds, threshold, prefix_len);
            assert_eq!(got.matched, want_matched, "case {case}");
            assert_eq!(got.overlapping_codes, want_codes, "case {case}");
            assert_eq!(got.best_score, want_best, "case {case}");
            if got.matched {
                matched_seen += 1;
            }
        }
        assert!(matched_seen > 1_000, "generator produced too few matches");
    });
}

/// Brute-force partition: pairwise similarity adjacency over distinct
/// folded keys, connected components by BFS.
fn oracle_partition(names: &[(String, String)], threshold: u8) -> BTreeSet<BTreeSet<String>> {
    let keys: BTreeSet<String> = names
        .iter()
        .filter(|(raw, _)| !raw.trim().is_empty())
        .map(|(raw, _)| fold_name(raw))
        .collect();
    let keys: Vec<String> = keys.into_iter().collect();
    let n = keys.len();
    let mut seen = vec![false; n];
    let mut parts = BTreeSet::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut queue = vec![start];
        let mut part = BTreeSet::new();
        seen[start] = true;
        while let Some(i) = queue.pop() {
            part.insert(keys[i].clone());
            for j in 0..n {
                if !seen[j] && similarity(&keys[i], &keys[j]) >= threshold {
                    seen[j] = true;
                    queue.push(j);
                }
            }
        }
        parts.insert(part);
    }
    parts
}

fn partition_of(clusters: &[linker_core::names::InventorCluster]) -> BTreeSet<BTreeSet<String>> {
    clusters
        .iter()
        .map(|c| c.variants.iter().map(|v| v.folded.clone()).collect())
        .collect()
}

fn random_names(rng: &mut StdRng, n: usize) -> Vec<(String, String)> {
    const FIRST: [&str; 8] = [
        "David", "Marie", "Thomas", "Claire", "Louis", "Sandrine", "Linh", "Manuel",
    ];
    const LAST: [&str; 8] = [
        "Reymond", "Dubois", "Leroy", "Fontaine", "Garnier", "Wolff", "Nguyen", "Barthez",
    ];
    (0..n)
        .map(|i| {
            let first = FIRST[rng.gen_range(0..FIRST.len())];
            let last = LAST[rng.gen_range(0..LAST.len())];
            let mut name = if rng.gen_bool(0.5) {
                format!("{first} {last}")
            } else {
                format!("{last}, {first}")
            };
            // occasional single-character typo
            if rng.gen_bool(0.2) {
                let pos = rng.gen_range(0..name.len());
                if name.is_char_boundary(pos) && name.is_char_boundary(pos + 1) {
                    name.replace_range(pos..pos + 1, "x");
                }
            }
            (name, format!("P{i}"))
        })
        .collect()
}

#[test]
fn criterion_5_clustering_against_transitive_closure() {
    criterion(5, "clustering vs brute-force transitive closure", || {
        let mut rng = StdRng::seed_from_u64(0x5ACC);
        for case in 0..1_000usize {
            let n = rng.gen_range(2..=40usize);
            let threshold = *[80u8, 90, 95, 100].get(rng.gen_range(0..4)).unwrap();
            let names = random_names(&mut rng, n);
            let clusters = cluster_inventors(&names, threshold);
            assert_eq!(
                partition_of(&clusters),
                oracle_partition(&names, threshold),
                "case {case} (n={n}, threshold={threshold})"
            );
            // permutation invariance
            let mut shuffled = names.clone();
            for i in (1..shuffled.len()).rev() {
                shuffled.swap(i, rng.gen_range(0..=i));
            }
            let reclusters = cluster_inventors(&shuffled, threshold);
            assert_eq!(clusters, reclusters, "case {case}: order changed the clusters");
        }
        // a few larger instances
        for _ in 0..5 {
            let names = random_names(&mut rng, 200);
            let clusters = cluster_inventors(&names, 90);
            assert_eq!(partition_of(&clusters), oracle_partition(&names, 90));
        }
        // threshold monotonicity: lowering the threshold can only merge
        let names = random_names(&mut rng, 120);
        let mut last = usize::MAX;
        for threshold in [100u8, 95, 90, 85, 70, 50] {
            let count = cluster_inventors(&names, threshold).len();
            assert!(count <= last, "threshold {threshold} grew the cluster count");
            last = count;
        }
    });
}

fn run_demo(dir: &Path, workers: usize, seed: u64) -> PipelineConfig {
    let config_path = linker_core::demo::materialize(dir, workers, seed).unwrap();
    let config = PipelineConfig::load(&config_path).unwrap();
    Pipeline::new(&config).run_all(None, false).unwrap();
    config
}

fn artifact_bytes(config: &PipelineConfig, rel: &str) -> Vec<u8> {
    std::fs::read(config.general.artifacts_dir.join(rel)).unwrap()
}

#[test]
fn criterion_6_demo_end_to_end_determinism() {
    criterion(6, "bundled demo end-to-end determinism", || {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let c1 = run_demo(d1.path(), 1, 42);
        let c2 = run_demo(d2.path(), 8, 42);

        for rel in ["demo/candidates.jsonl", "demo/decisions.jsonl", "report.txt", "report.json"]
        {
            assert_eq!(
                artifact_bytes(&c1, rel),
                artifact_bytes(&c2, rel),
                "{rel} differs between workers=1 and workers=8"
            );
        }
        // forced rerun in place is byte-identical
        let before = artifact_bytes(&c1, "demo/candidates.jsonl");
        Pipeline::new(&c1).run_all(None, true).unwrap();
        assert_eq!(before, artifact_bytes(&c1, "demo/candidates.jsonl"));

        // candidates match the frozen expectation (id, canonical, pubs)
        #[derive(serde::Deserialize)]
        struct Expected {
            cluster_id: String,
            canonical: String,
            matched_publications: Vec<String>,
        }
        let expected: Vec<Expected> = linker_core::demo::EXPECTED_CANDIDATES
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        let candidates: Vec<linker_core::AuthorInventorCandidate> =
            String::from_utf8(artifact_bytes(&c1, "demo/candidates.jsonl"))
                .unwrap()
                .lines()
                .map(|l| serde_json::from_str(l).unwrap())
                .collect();
        let clusters: Vec<linker_core::names::InventorCluster> =
            String::from_utf8(artifact_bytes(&c1, "demo/normalize.jsonl"))
                .unwrap()
                .lines()
                .map(|l| serde_json::from_str(l).unwrap())
                .collect();
        let canonical: BTreeMap<&str, &str> = clusters
            .iter()
            .map(|c| (c.cluster_id.as_str(), c.canonical.as_str()))
            .collect();
        assert_eq!(candidates.len(), expected.len());
        for (got, want) in candidates.iter().zip(&expected) {
            assert_eq!(got.cluster_id, want.cluster_id);
            assert_eq!(canonical[got.cluster_id.as_str()], want.canonical);
            assert_eq!(got.matched_publications, want.matched_publications);
        }
    });
}

fn candidate_count(config: &PipelineConfig) -> usize {
    String::from_utf8(artifact_bytes(config, "demo/candidates.jsonl"))
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .count()
}

#[test]
fn criterion_7_threshold_and_prefix_sweeps() {
    criterion(7, "threshold/prefix sensitivity sweeps", || {
        let dir = tempfile::tempdir().unwrap();
        let config_path = linker_core::demo::materialize(dir.path(), 1, 42).unwrap();
        let base = PipelineConfig::load(&config_path).unwrap();
        // prepare upstream stages once
        let pipeline = Pipeline::new(&base);
        for stage in [Stage::Ingest, Stage::Normalize, Stage::Homonyms, Stage::Classify] {
            pipeline.run_stage("demo", stage, false).unwrap();
        }

        let counts: Vec<usize> = (0..=20u64)
            .map(|i| {
                let mut config = base.clone();
                config.thresholds.classifier_score = i * 100;
                Pipeline::new(&config).run_stage("demo", Stage::Match, true).unwrap();
                candidate_count(&config)
            })
            .collect();
        let expected = {
            let mut v = vec![14, 14, 14, 13, 13, 12, 11, 11, 10, 1];
            v.resize(21, 0);
            v
        };
        assert_eq!(counts, expected);
        assert!(counts.windows(2).all(|w| w[0] >= w[1]), "not non-increasing");

        let prefix_counts: Vec<usize> = (1..=8usize)
            .rev()
            .map(|prefix_len| {
                let mut config = base.clone();
                config.thresholds.prefix_len = prefix_len;
                Pipeline::new(&config).run_stage("demo", Stage::Match, true).unwrap();
                candidate_count(&config)
            })
            .collect();
        assert_eq!(prefix_counts, vec![0, 0, 0, 0, 10, 10, 11, 11]);
        assert!(
            prefix_counts.windows(2).all(|w| w[0] <= w[1]),
            "shorter prefixes must only add matches"
        );
    });
}

#[test]
fn criterion_8_sampling_invariants() {
    criterion(8, "sampling and verdict conservation invariants", || {
        let mut rng = StdRng::seed_from_u64(0x8ACC);
        // fraction mode size arithmetic and uniqueness, all population sizes
        for n in 1..=60usize {
            let ids: Vec<String> = (0..n).map(|i| format!("id{i:03}")).collect();
            let params = SamplingParams { seed: n as u64, ..Default::default() };
            let sample = draw_sample("t", &ids, &params).unwrap();
            let want = (((0.10 * n as f64).round() as usize).max(1)).min(n);
            assert_eq!(sample.sampled_cluster_ids.len(), want, "n={n}");
            let unique: BTreeSet<&String> = sample.sampled_cluster_ids.iter().collect();
            assert_eq!(unique.len(), sample.sampled_cluster_ids.len());
            assert!(sample.sampled_cluster_ids.iter().all(|id| ids.contains(id)));
        }
        // target-margin mode is capped at the population
        for n in [1usize, 5, 27, 334, 2501] {
            let ids: Vec<String> = (0..n).map(|i| format!("id{i:05}")).collect();
            let params = SamplingParams {
                mode: SamplingMode::TargetMargin,
                seed: 7,
                ..Default::default()
            };
            let sample = draw_sample("t", &ids, &params).unwrap();
            let want = required_sample_size(n, 0.05, 1.96, 0.5).unwrap();
            assert_eq!(sample.sampled_cluster_ids.len(), want.min(n));
        }
        // seed determinism
        let ids: Vec<String> = (0..500).map(|i| format!("id{i:04}")).collect();
        let params = SamplingParams { seed: 99, ..Default::default() };
        let a = draw_sample("t", &ids, &params).unwrap();
        let b = draw_sample("t", &ids, &params).unwrap();
        assert_eq!(a, b);
        let c = draw_sample(
            "t",
            &ids,
            &SamplingParams { seed: 100, ..Default::default() },
        )
        .unwrap();
        assert_ne!(a.sampled_cluster_ids, c.sampled_cluster_ids);

        // conservation through randomized verdict sequences
        let mut sample = a;
        for _ in 0..500 {
            let id = sample.sampled_cluster_ids
                [rng.gen_range(0..sample.sampled_cluster_ids.len())]
            .clone();
            let verdict = [Verdict::Verified, Verdict::Doubt, Verdict::Error]
                [rng.gen_range(0..3)];
            record_verdict(&mut sample, &id, verdict).unwrap();
            let counts = VerdictCounts::from_sample(&sample);
            assert_eq!(
                counts.verified + counts.doubt + counts.error + counts.pending,
                counts.sample
            );
            let stats = compute_corpus_stats("t", 1000, 800, 600, 500).unwrap();
            build_report(&[(stats, counts)]).unwrap();
        }
    });
}
