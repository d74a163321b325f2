//! Content-addressed on-disk store for stage artifacts.
//!
//! Entries are JSON files named by the SHA-256 of the stage inputs. Writes go
//! to a temporary file in the same directory and are renamed into place, so
//! readers never observe a partial entry and concurrent writers of the same
//! key are harmless (they produce identical bytes).

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use log::{debug, warn};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::Result;

pub const CACHE_DIR_ENV: &str = "RECMIA_CACHE_DIR";

/// Hex SHA-256 of the JSON encoding of `value`.
pub fn content_key<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Hex SHA-256 of raw bytes.
pub fn digest_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, Default)]
pub struct Cache {
    dir: Option<PathBuf>,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl Cache {
    /// A cache that never stores anything.
    pub fn disabled() -> Self {
        Cache { dir: None }
    }

    pub fn at(dir: impl Into<PathBuf>) -> Self {
        Cache { dir: Some(dir.into()) }
    }

    /// `$RECMIA_CACHE_DIR` when set, else `<tmp>/recmia-cache`.
    pub fn from_env() -> Self {
        match std::env::var_os(CACHE_DIR_ENV) {
            Some(dir) if !dir.is_empty() => Cache::at(dir),
            _ => Cache::at(std::env::temp_dir().join("recmia-cache")),
        }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn path(&self, kind: &str, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(kind).join(format!("{key}.json")))
    }

    pub fn load<T: DeserializeOwned>(&self, kind: &str, key: &str) -> Option<T> {
        let path = self.path(kind, key)?;
        let file = fs::File::open(&path).ok()?;
        match serde_json::from_reader(BufReader::new(file)) {
            Ok(v) => {
                debug!("cache hit {}", path.display());
                Some(v)
            }
            Err(e) => {
                warn!("ignoring unreadable cache entry {}: {e}", path.display());
                None
            }
        }
    }

    pub fn store<T: Serialize>(&self, kind: &str, key: &str, value: &T) -> Result<()> {
        let Some(path) = self.path(kind, key) else {
            return Ok(());
        };
        let parent = path.parent().expect("entry has a parent");
        fs::create_dir_all(parent)?;
        let tmp = parent.join(format!(
            ".{key}.{}.{}.tmp",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        {
            let mut out = BufWriter::new(fs::File::create(&tmp)?);
            serde_json::to_writer(&mut out, value)?;
            out.flush()?;
        }
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    /// Load `kind/key`, or compute and store it. Storage failures are logged,
    /// not fatal.
    pub fn get_or_compute<T, F>(&self, kind: &str, key: &str, compute: F) -> Result<T>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<T>,
    {
        if let Some(v) = self.load(kind, key) {
            return Ok(v);
        }
        let v = compute()?;
        if let Err(e) = self.store(kind, key, &v) {
            warn!("could not write cache entry {kind}/{key}: {e}");
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_depend_on_content() {
        assert_eq!(content_key(&(1, "a")).unwrap(), content_key(&(1, "a")).unwrap());
        assert_ne!(content_key(&(1, "a")).unwrap(), content_key(&(2, "a")).unwrap());
        assert_eq!(digest_bytes(b"").len(), 64);
    }

    #[test]
    fn computes_once_then_hits() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::at(dir.path());
        let mut calls = 0;
        let a: Vec<f64> = cache
            .get_or_compute("t", "k", || {
                calls += 1;
                Ok(vec![0.1, 1.0 / 3.0])
            })
            .unwrap();
        let b: Vec<f64> = cache
            .get_or_compute("t", "k", || {
                calls += 1;
                Ok(vec![])
            })
            .unwrap();
        assert_eq!(calls, 1);
        assert_eq!(a, b);
    }

    #[test]
    fn corrupt_entries_are_recomputed() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::at(dir.path());
        fs::create_dir_all(dir.path().join("t")).unwrap();
        fs::write(dir.path().join("t/k.json"), "{not json").unwrap();
        let v: u32 = cache.get_or_compute("t", "k", || Ok(7)).unwrap();
        assert_eq!(v, 7);
        assert_eq!(cache.load::<u32>("t", "k"), Some(7));
    }

    #[test]
    fn disabled_cache_always_computes() {
        let cache = Cache::disabled();
        let mut calls = 0;
        for _ in 0..2 {
            let _: u8 = cache
                .get_or_compute("t", "k", || {
                    calls += 1;
                    Ok(1)
                })
                .unwrap();
        }
        assert_eq!(calls, 2);
    }
}
