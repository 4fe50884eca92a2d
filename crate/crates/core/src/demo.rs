//! Bundled offline demo: a 20-patent fixture corpus, a keyword lexicon
//! for the stub classifier, publication and geocoder fixtures, and the
//! expected candidate list. Everything runs offline in seconds.

use std::io;
use std::path::{Path, PathBuf};

pub const PATENTS: &str = include_str!("../fixtures/demo/patents.jsonl");
pub const PUBLICATIONS: &str = include_str!("../fixtures/demo/publications.jsonl");
pub const GEOCODE: &str = include_str!("../fixtures/demo/geocode.jsonl");
pub const LEXICON: &str = include_str!("../fixtures/demo/lexicon.txt");
pub const EXPECTED_CANDIDATES: &str = include_str!("../fixtures/demo/expected_candidates.jsonl");

pub const DEMO_QUERY: &str =
    r#"(pa=univ* or pa=institut or pa=laboratoire) AND (ic=A61) AND (pd within "2014, 2016") AND pr=FR"#;

/// Write the demo fixtures and a ready-to-run config into `out_dir`.
/// Returns the config path.
pub fn materialize(out_dir: &Path, workers: usize, seed: u64) -> io::Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let fixtures = [
        ("patents.jsonl", PATENTS),
        ("publications.jsonl", PUBLICATIONS),
        ("geocode.jsonl", GEOCODE),
        ("lexicon.txt", LEXICON),
        ("expected_candidates.jsonl", EXPECTED_CANDIDATES),
    ];
    for (name, content) in fixtures {
        std::fs::write(out_dir.join(name), content)?;
    }
    let dir = out_dir.display();
    let config = format!(
        r#"[general]
cache_dir = "{dir}/cache"
artifacts_dir = "{dir}/artifacts"
workers = {workers}

[sampling]
seed = {seed}

[fixtures]
patents = "{dir}/patents.jsonl"
publications = "{dir}/publications.jsonl"
geocoder = "{dir}/geocode.jsonl"
lexicon = "{dir}/lexicon.txt"

[[corpus]]
corpus_id = "demo"
query = '{DEMO_QUERY}'
description = "Bundled offline demo corpus (20 patents, 37 inventor name occurrences)"
"#
    );
    let config_path = out_dir.join("config.toml");
    std::fs::write(&config_path, config)?;
    Ok(config_path)
}
