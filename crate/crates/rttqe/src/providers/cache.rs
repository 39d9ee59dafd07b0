//! Content-addressed on-disk cache for provider responses.
//!
//! Each entry lives at `<root>/<k[0..2]>/<k[2..4]>/<k>` with the value stored
//! verbatim, next to a `<k>.meta.json` sidecar. Readers never take a lock;
//! writers are serialized and publish entries with an atomic rename.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A stable digest naming one provider response.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CacheKey(String);

impl CacheKey {
    /// Digest of the request identity. Fields are length-prefixed so no two
    /// distinct field tuples can collide by concatenation.
    pub fn new(fields: &[&str]) -> Self {
        let mut hasher = Sha256::new();
        for field in fields {
            hasher.update((field.len() as u64).to_le_bytes());
            hasher.update(field.as_bytes());
        }
        Self(hex::encode(hasher.finalize()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for CacheKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryMeta {
    pub provider_id: String,
    pub kind: String,
    pub created_at: String,
}

#[derive(Debug)]
pub struct Cache {
    root: PathBuf,
    write_lock: Mutex<()>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl Cache {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            write_lock: Mutex::new(()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn entry_path(&self, key: &CacheKey) -> PathBuf {
        let k = key.as_str();
        self.root.join(&k[0..2]).join(&k[2..4]).join(k)
    }

    pub fn get(&self, key: &CacheKey) -> io::Result<Option<Vec<u8>>> {
        match fs::read(self.entry_path(key)) {
            Ok(bytes) => {
                self.hits.fetch_add(1, Ordering::Relaxed);
                Ok(Some(bytes))
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                self.misses.fetch_add(1, Ordering::Relaxed);
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }

    pub fn contains(&self, key: &CacheKey) -> bool {
        self.entry_path(key).is_file()
    }

    pub fn put(&self, key: &CacheKey, value: &[u8], meta: &EntryMeta) -> io::Result<()> {
        let path = self.entry_path(key);
        let dir = path.parent().expect("entry paths are nested");
        let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
        fs::create_dir_all(dir)?;
        let meta_json = serde_json::to_vec_pretty(meta).map_err(io::Error::other)?;
        write_atomic(&dir.join(format!("{key}.meta.json")), &meta_json)?;
        write_atomic(&path, value)
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn meta() -> EntryMeta {
        EntryMeta {
            provider_id: "p".into(),
            kind: "translation".into(),
            created_at: "2019-12-01T00:00:00Z".into(),
        }
    }

    #[test]
    fn keys_are_stable_and_unambiguous() {
        let k = CacheKey::new(&["google", "de", "en", "Hallo"]);
        assert_eq!(k, CacheKey::new(&["google", "de", "en", "Hallo"]));
        assert_eq!(k.as_str().len(), 64);
        assert_ne!(CacheKey::new(&["ab", "c"]), CacheKey::new(&["a", "bc"]));
    }

    #[test]
    fn miss_then_hit() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::open(dir.path()).unwrap();
        let k = CacheKey::new(&["x"]);
        assert_eq!(cache.get(&k).unwrap(), None);
        cache.put(&k, b"value", &meta()).unwrap();
        assert_eq!(cache.get(&k).unwrap().as_deref(), Some(&b"value"[..]));
        assert_eq!((cache.hits(), cache.misses()), (1, 1));
        let sidecar = cache.entry_path(&k).with_extension("meta.json");
        assert!(sidecar.is_file());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn round_trip_is_byte_identical(value in prop::collection::vec(any::<u8>(), 0..256), text in ".*") {
            let dir = tempfile::tempdir().unwrap();
            let cache = Cache::open(dir.path()).unwrap();
            let k = CacheKey::new(&["p", &text]);
            cache.put(&k, &value, &meta()).unwrap();
            prop_assert_eq!(cache.get(&k).unwrap(), Some(value));
        }
    }
}
