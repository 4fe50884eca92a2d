//! Content-checked response cache with atomic replace. Entries are keyed
//! by a request hash; the stored body hash is verified on read and corrupt
//! entries are evicted and treated as misses.

use sha2::{Digest, Sha256};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache io error: {0}")]
    Io(#[from] std::io::Error),
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash a request key from its parts (endpoint, query, page, ...).
pub fn request_key(parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update(p.as_bytes());
        hasher.update([0u8]);
    }
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone)]
pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    pub fn new(dir: impl AsRef<Path>) -> Cache {
        Cache {
            dir: dir.as_ref().to_path_buf(),
        }
    }

    fn body_path(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2]).join(format!("{key}.bin"))
    }

    fn digest_path(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2]).join(format!("{key}.sha256"))
    }

    /// Returns the cached body, or None on miss. A body whose stored
    /// digest no longer matches is evicted and reported as a miss.
    pub fn get(&self, key: &str) -> Option<Vec<u8>> {
        let body = fs::read(self.body_path(key)).ok()?;
        let digest = fs::read_to_string(self.digest_path(key)).ok()?;
        if sha256_hex(&body) != digest.trim() {
            log::warn!("cache entry {key} is corrupt, evicting");
            let _ = fs::remove_file(self.body_path(key));
            let _ = fs::remove_file(self.digest_path(key));
            return None;
        }
        Some(body)
    }

    /// Stores a body under the key via write-to-temp + rename, so readers
    /// never observe a partial entry.
    pub fn put(&self, key: &str, body: &[u8]) -> Result<(), CacheError> {
        let dir = self.dir.join(&key[..2]);
        fs::create_dir_all(&dir)?;
        atomic_write(&self.body_path(key), body)?;
        atomic_write(&self.digest_path(key), sha256_hex(body).as_bytes())?;
        Ok(())
    }
}

/// Write a file atomically: temp file in the same directory, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    static SEQ: std::sync::atomic::AtomicU64 = std::sync::atomic::AtomicU64::new(0);
    let tmp = dir.join(format!(
        ".{}.tmp-{}-{}",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("f"),
        std::process::id(),
        SEQ.fetch_add(1, std::sync::atomic::Ordering::Relaxed)
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}
