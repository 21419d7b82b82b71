//! Disk cache for remote backend responses.
//!
//! Cache key is the SHA-256 of the canonical JSON of
//! `(endpoint kind, identity, params, request body)`; entries live at
//! `{cache_dir}/{first 2 hex}/{hash}.json`. For a fixed backend and request
//! the cached and uncached paths return identical results.

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug)]
pub struct DiskCache {
    dir: PathBuf,
    // Serializes read-modify-write cycles between threads of this process.
    lock: Mutex<()>,
}

/// Canonical JSON: serde_json object maps are sorted, so a compact dump of
/// a `Value` is already canonical.
pub fn canonical_json(value: &Value) -> String {
    value.to_string()
}

/// Cache key for a request.
pub fn request_key(kind: &str, identity: &str, params: &Value, body: &Value) -> String {
    let envelope = serde_json::json!({
        "kind": kind,
        "identity": identity,
        "params": params,
        "body": body,
    });
    let mut hasher = Sha256::new();
    hasher.update(canonical_json(&envelope).as_bytes());
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl DiskCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(DiskCache {
            dir,
            lock: Mutex::new(()),
        })
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2]).join(format!("{key}.json"))
    }

    /// Fetch a cached response. A present-but-unparsable file is fatal and
    /// names the offending path.
    pub fn get(&self, key: &str) -> Result<Option<Value>> {
        let _guard = self.lock.lock().expect("cache lock poisoned");
        let path = self.path_for(key);
        let raw = match std::fs::read_to_string(&path) {
            Ok(raw) => raw,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Error::io(&path, e)),
        };
        let value = serde_json::from_str(&raw).map_err(|source| Error::CacheCorrupt {
            path: path.clone(),
            source,
        })?;
        Ok(Some(value))
    }

    /// Store a response; writes via a temp file then renames.
    pub fn put(&self, key: &str, value: &Value) -> Result<()> {
        let _guard = self.lock.lock().expect("cache lock poisoned");
        let path = self.path_for(key);
        let parent = path.parent().expect("cache paths have a parent");
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, canonical_json(value)).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(())
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_is_stable_and_sensitive() {
        let body = serde_json::json!({"prompt": "p", "n": 1});
        let a = request_key("completions", "m", &serde_json::json!({"t": 0.7}), &body);
        let b = request_key("completions", "m", &serde_json::json!({"t": 0.7}), &body);
        assert_eq!(a, b);
        let c = request_key("completions", "m2", &serde_json::json!({"t": 0.7}), &body);
        assert_ne!(a, c);
    }

    #[test]
    fn get_put_roundtrip_and_layout() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::new(dir.path()).unwrap();
        let key = request_key("k", "i", &Value::Null, &serde_json::json!({"q": 1}));
        assert!(cache.get(&key).unwrap().is_none());
        cache.put(&key, &serde_json::json!({"answer": 42})).unwrap();
        let hit = cache.get(&key).unwrap().unwrap();
        assert_eq!(hit["answer"], 42);
        assert!(dir
            .path()
            .join(&key[..2])
            .join(format!("{key}.json"))
            .exists());
    }

    #[test]
    fn corrupt_entry_is_fatal_with_path() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::new(dir.path()).unwrap();
        let key = request_key("k", "i", &Value::Null, &Value::Null);
        let path = dir.path().join(&key[..2]).join(format!("{key}.json"));
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, "{not json").unwrap();
        match cache.get(&key).unwrap_err() {
            Error::CacheCorrupt { path: p, .. } => assert_eq!(p, path),
            other => panic!("unexpected error: {other}"),
        }
    }
}
