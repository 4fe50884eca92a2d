//! Lexical pre-normalization of inventor names: folding, token-order
//! insensitive edit-distance similarity, and union-find clustering of
//! variants into inventors.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq, PartialOrd, Ord)]
pub struct NameVariant {
    pub raw: String,
    pub folded: String,
}

impl NameVariant {
    pub fn new(raw: &str) -> NameVariant {
        NameVariant {
            raw: raw.to_string(),
            folded: fold_name(raw),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct InventorCluster {
    pub cluster_id: String,
    pub canonical: String,
    pub variants: BTreeSet<NameVariant>,
    pub patent_refs: BTreeSet<String>,
}

/// Case-fold, strip diacritics, collapse punctuation to spaces and sort
/// tokens, so that name inversions and accents compare equal.
pub fn fold_name(raw: &str) -> String {
    let stripped: String = raw
        .nfd()
        .filter(|c| !unicode_normalization::char::is_combining_mark(*c))
        .collect();
    let lowered = stripped.to_lowercase();
    let mut tokens: Vec<&str> = Vec::new();
    let spaced: String = lowered
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    tokens.extend(spaced.split_whitespace());
    tokens.sort_unstable();
    tokens.join(" ")
}

fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let cost = usize::from(ca != cb);
            cur[j + 1] = (prev[j + 1] + 1).min(cur[j] + 1).min(prev[j] + cost);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Integer similarity ratio in [0, 100] over already-folded strings:
/// `round(100 * (1 - levenshtein / max_len))`. Two empty strings score 100.
pub fn similarity(a: &str, b: &str) -> u8 {
    let max_len = a.chars().count().max(b.chars().count());
    if max_len == 0 {
        return 100;
    }
    let d = levenshtein(a, b);
    (100.0 * (1.0 - d as f64 / max_len as f64)).round() as u8
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            self.parent[x] = self.find(self.parent[x]);
        }
        self.parent[x]
    }

    fn union(&mut self, x: usize, y: usize) {
        let (rx, ry) = (self.find(x), self.find(y));
        if rx == ry {
            return;
        }
        match self.rank[rx].cmp(&self.rank[ry]) {
            std::cmp::Ordering::Less => self.parent[rx] = ry,
            std::cmp::Ordering::Greater => self.parent[ry] = rx,
            std::cmp::Ordering::Equal => {
                self.parent[ry] = rx;
                self.rank[rx] += 1;
            }
        }
    }
}

fn cluster_id_for(folded: &BTreeSet<String>) -> String {
    let mut hasher = Sha256::new();
    for f in folded {
        hasher.update(f.as_bytes());
        hasher.update(b"\n");
    }
    hex::encode(&hasher.finalize()[..8])
}

/// Cluster raw (name, publication_number) pairs: variants whose folded
/// keys score >= `threshold` are linked and clusters are the connected
/// components. The canonical form is the longest raw string (ties broken
/// by the lexicographically smallest).
pub fn cluster_inventors(names: &[(String, String)], threshold: u8) -> Vec<InventorCluster> {
    // group by folded key first; identical keys always merge
    let mut by_folded: BTreeMap<String, (BTreeSet<NameVariant>, BTreeSet<String>)> =
        BTreeMap::new();
    for (raw, pubnum) in names {
        if raw.trim().is_empty() {
            continue;
        }
        let v = NameVariant::new(raw);
        let entry = by_folded.entry(v.folded.clone()).or_default();
        entry.0.insert(v);
        entry.1.insert(pubnum.clone());
    }
    let keys: Vec<&String> = by_folded.keys().collect();
    let mut uf = UnionFind::new(keys.len());
    for i in 0..keys.len() {
        for j in (i + 1)..keys.len() {
            if similarity(keys[i], keys[j]) >= threshold {
                uf.union(i, j);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..keys.len() {
        let root = uf.find(i);
        groups.entry(root).or_default().push(i);
    }
    let mut clusters: Vec<InventorCluster> = groups
        .values()
        .map(|members| {
            let mut variants: BTreeSet<NameVariant> = BTreeSet::new();
            let mut patent_refs: BTreeSet<String> = BTreeSet::new();
            for &m in members {
                let (vs, ps) = &by_folded[keys[m]];
                variants.extend(vs.iter().cloned());
                patent_refs.extend(ps.iter().cloned());
            }
            let canonical = variants
                .iter()
                .map(|v| v.raw.clone())
                .max_by(|a, b| {
                    a.chars()
                        .count()
                        .cmp(&b.chars().count())
                        .then_with(|| b.cmp(a)) // prefer lexicographically smaller
                })
                .expect("non-empty cluster");
            let folded: BTreeSet<String> = variants.iter().map(|v| v.folded.clone()).collect();
            InventorCluster {
                cluster_id: cluster_id_for(&folded),
                canonical,
                variants,
                patent_refs,
            }
        })
        .collect();
    clusters.sort_by(|a, b| a.canonical.cmp(&b.canonical).then(a.cluster_id.cmp(&b.cluster_id)));
    clusters
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folding_examples() {
        assert_eq!(fold_name("Reymond, David"), "david reymond");
        assert_eq!(fold_name("DAVID REYMOND"), "david reymond");
        assert_eq!(fold_name("Durand-Barthez Manuel"), "barthez durand manuel");
        assert_eq!(fold_name("d'Estienne Rémi"), "d estienne remi");
        assert_eq!(fold_name(""), "");
    }

    #[test]
    fn folding_is_idempotent() {
        for raw in ["Reymond, David", "Durand-Barthez Manuel", "ÀÉÎÕÜ test"] {
            let once = fold_name(raw);
            assert_eq!(fold_name(&once), once);
        }
    }

    #[test]
    fn similarity_examples() {
        assert_eq!(similarity("david reymond", "david reymond"), 100);
        assert_eq!(similarity("abc", "abd"), 67);
        assert_eq!(
            similarity("manuel durand barthez", "manuel durand barthes"),
            95
        );
        assert_eq!(similarity("", ""), 100);
        assert_eq!(similarity("abc", ""), 0);
    }

    #[test]
    fn inverted_names_merge() {
        let names = vec![
            ("Reymond David".to_string(), "P1".to_string()),
            ("David Reymond".to_string(), "P2".to_string()),
        ];
        let clusters = cluster_inventors(&names, 90);
        assert_eq!(clusters.len(), 1);
        assert_eq!(
            clusters[0].patent_refs,
            ["P1", "P2"].iter().map(|s| s.to_string()).collect()
        );
        // both raws are 13 chars; lexicographically smaller wins the tie
        assert_eq!(clusters[0].canonical, "David Reymond");
    }

    #[test]
    fn unrelated_names_stay_apart() {
        let names = vec![
            ("Wolff Sandrine".to_string(), "P1".to_string()),
            ("Khouilla Heman".to_string(), "P2".to_string()),
        ];
        let clusters = cluster_inventors(&names, 90);
        assert_eq!(clusters.len(), 2);
    }

    #[test]
    fn longest_raw_is_canonical() {
        let names = vec![
            ("Durand Barthez Manuel".to_string(), "P1".to_string()),
            ("Durand-Barthez Manuel G".to_string(), "P2".to_string()),
        ];
        let clusters = cluster_inventors(&names, 85);
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].canonical, "Durand-Barthez Manuel G");
    }

    #[test]
    fn empty_input_gives_empty_output() {
        assert!(cluster_inventors(&[], 90).is_empty());
    }

    #[test]
    fn initials_do_not_merge_with_full_names() {
        let names = vec![
            ("Martin P.".to_string(), "P1".to_string()),
            ("Pierre Martin".to_string(), "P2".to_string()),
        ];
        assert_eq!(cluster_inventors(&names, 90).len(), 2);
    }
}
