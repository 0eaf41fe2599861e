//! Write-through on-disk cache for provider responses.
//!
//! One JSON file per record, named by the SHA-256 of its canonical request
//! key. Records carry a digest of their body so corruption is detectable.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provider {
    NewsSearch,
    Wikipedia,
}

impl Provider {
    pub fn as_str(self) -> &'static str {
        match self {
            Provider::NewsSearch => "news_search",
            Provider::Wikipedia => "wikipedia",
        }
    }
}

/// Lowercase, trim and collapse internal whitespace.
pub fn normalize_request(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Canonical key: provider name followed by `name=value` pairs in the
/// order given, values normalized.
pub fn request_key(provider: Provider, parts: &[(&str, &str)]) -> String {
    let mut key = provider.as_str().to_string();
    for (name, value) in parts {
        key.push('|');
        key.push_str(name);
        key.push('=');
        key.push_str(&normalize_request(value));
    }
    key
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheRecord {
    pub provider: Provider,
    pub request_key: String,
    /// HTTP status of the recorded response; 404 records a known miss.
    pub status: u16,
    pub fetched_at: i64,
    pub body_sha256: String,
    /// Base64 of the raw response bytes.
    pub body: String,
}

impl CacheRecord {
    pub fn new(provider: Provider, request_key: String, status: u16, body: &[u8], fetched_at: i64) -> Self {
        CacheRecord {
            provider,
            request_key,
            status,
            fetched_at,
            body_sha256: sha256_hex(body),
            body: BASE64.encode(body),
        }
    }

    pub fn body_bytes(&self) -> Result<Vec<u8>> {
        BASE64
            .decode(&self.body)
            .map_err(|e| Error::Validation(format!("cache body for `{}`: {e}", self.request_key)))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn now_epoch() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0)
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(ResponseCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, request_key: &str) -> PathBuf {
        self.dir.join(format!("{}.json", sha256_hex(request_key.as_bytes())))
    }

    pub fn get(&self, request_key: &str) -> Result<Option<CacheRecord>> {
        let path = self.path_for(request_key);
        let raw = match fs::read(&path) {
            Ok(raw) => raw,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Error::io(&path, e)),
        };
        let record: CacheRecord = serde_json::from_slice(&raw).map_err(|e| Error::Integrity {
            path: path.clone(),
            message: e.to_string(),
        })?;
        check_record(&path, &record)?;
        Ok(Some(record))
    }

    /// Atomic replace: readers see either the old record or the new one.
    pub fn put(&self, record: &CacheRecord) -> Result<()> {
        let path = self.path_for(&record.request_key);
        let tmp = self.dir.join(format!(
            ".tmp-{}-{}",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        let bytes = serde_json::to_vec_pretty(record)?;
        fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }

    fn record_paths(&self) -> Result<Vec<PathBuf>> {
        let mut paths = Vec::new();
        for entry in fs::read_dir(&self.dir).map_err(|e| Error::io(&self.dir, e))? {
            let path = entry.map_err(|e| Error::io(&self.dir, e))?.path();
            if path.extension().is_some_and(|e| e == "json") {
                paths.push(path);
            }
        }
        paths.sort();
        Ok(paths)
    }

    pub fn len(&self) -> Result<usize> {
        Ok(self.record_paths()?.len())
    }

    pub fn is_empty(&self) -> Result<bool> {
        Ok(self.len()? == 0)
    }

    /// Paths of records that fail to parse, sit under the wrong file name
    /// or whose body no longer matches its digest.
    pub fn verify(&self) -> Result<Vec<PathBuf>> {
        let mut bad = Vec::new();
        for path in self.record_paths()? {
            let ok = fs::read(&path)
                .ok()
                .and_then(|raw| serde_json::from_slice::<CacheRecord>(&raw).ok())
                .is_some_and(|rec| check_record(&path, &rec).is_ok());
            if !ok {
                bad.push(path);
            }
        }
        Ok(bad)
    }

    /// Remove records fetched before `cutoff` (epoch seconds). Unreadable
    /// records are removed too. Returns how many files were deleted.
    pub fn gc(&self, cutoff: i64) -> Result<usize> {
        let mut removed = 0;
        for path in self.record_paths()? {
            let keep = fs::read(&path)
                .ok()
                .and_then(|raw| serde_json::from_slice::<CacheRecord>(&raw).ok())
                .is_some_and(|rec| rec.fetched_at >= cutoff);
            if !keep {
                fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
                removed += 1;
            }
        }
        Ok(removed)
    }

    /// Digest over every record file name and content, in name order.
    pub fn digest(&self) -> Result<String> {
        let mut hasher = Sha256::new();
        for path in self.record_paths()? {
            let raw = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            hasher.update(path.file_name().unwrap_or_default().as_encoded_bytes());
            hasher.update([0]);
            hasher.update(&raw);
        }
        Ok(hex::encode(hasher.finalize()))
    }
}

fn check_record(path: &Path, record: &CacheRecord) -> Result<()> {
    let expected = format!("{}.json", sha256_hex(record.request_key.as_bytes()));
    if path.file_name().and_then(|n| n.to_str()) != Some(expected.as_str()) {
        return Err(Error::Integrity {
            path: path.to_path_buf(),
            message: "file name does not match request key".into(),
        });
    }
    let body = record.body_bytes().map_err(|e| Error::Integrity {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if sha256_hex(&body) != record.body_sha256 {
        return Err(Error::Integrity {
            path: path.to_path_buf(),
            message: "body digest mismatch".into(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_key_is_case_and_space_normalized() {
        let a = request_key(Provider::Wikipedia, &[("lang", "en"), ("title", "  Germanwings   Flight 9525 ")]);
        let b = request_key(Provider::Wikipedia, &[("lang", "EN"), ("title", "germanwings flight 9525")]);
        assert_eq!(a, b);
        assert_eq!(a, "wikipedia|lang=en|title=germanwings flight 9525");
    }

    #[test]
    fn put_get_round_trip_and_verify() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        let key = request_key(Provider::NewsSearch, &[("q", "alps crash")]);
        assert!(cache.get(&key).unwrap().is_none());
        let rec = CacheRecord::new(Provider::NewsSearch, key.clone(), 200, b"{\"value\":[]}", 100);
        cache.put(&rec).unwrap();
        assert_eq!(cache.get(&key).unwrap(), Some(rec));
        assert!(cache.verify().unwrap().is_empty());
    }

    #[test]
    fn verify_flags_tampered_body() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        let key = request_key(Provider::Wikipedia, &[("title", "x")]);
        let mut rec = CacheRecord::new(Provider::Wikipedia, key.clone(), 200, b"hello", 1);
        rec.body = BASE64.encode(b"hellO");
        cache.put(&rec).unwrap();
        assert_eq!(cache.verify().unwrap(), vec![cache.path_for(&key)]);
        assert!(matches!(cache.get(&key), Err(Error::Integrity { .. })));
    }

    #[test]
    fn gc_with_future_cutoff_empties_cache() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        for (i, t) in [10i64, 20, 30].into_iter().enumerate() {
            let key = request_key(Provider::NewsSearch, &[("q", &format!("q{i}"))]);
            cache.put(&CacheRecord::new(Provider::NewsSearch, key, 200, b"{}", t)).unwrap();
        }
        assert_eq!(cache.gc(20).unwrap(), 1);
        assert_eq!(cache.len().unwrap(), 2);
        assert_eq!(cache.gc(now_epoch() + 1_000).unwrap(), 2);
        assert!(cache.is_empty().unwrap());
    }

    #[test]
    fn digest_changes_with_content() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        let empty = cache.digest().unwrap();
        let key = request_key(Provider::NewsSearch, &[("q", "a")]);
        cache.put(&CacheRecord::new(Provider::NewsSearch, key, 200, b"{}", 1)).unwrap();
        assert_ne!(empty, cache.digest().unwrap());
    }
}
