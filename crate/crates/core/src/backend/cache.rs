use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{cache_key, BackendError, BackendKind, CompletionBackend, CompletionRequest};

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    key: String,
    identity: String,
    request: CompletionRequest,
    response: String,
}

/// Wraps a backend with a one-file-per-entry disk cache.
///
/// Entries live at `<dir>/<hex digest>.json` and hold both the request and
/// the response. Writes go to a temporary file that is renamed into place,
/// so readers never see partial entries. Concurrent misses on the same key
/// are serialized within the process.
pub struct CachedBackend<B> {
    inner: B,
    dir: PathBuf,
    key_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
    tmp_counter: AtomicUsize,
}

impl<B: CompletionBackend> CachedBackend<B> {
    pub fn new(inner: B, dir: impl Into<PathBuf>) -> Result<Self, BackendError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| BackendError::Cache(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            inner,
            dir,
            key_locks: Mutex::new(HashMap::new()),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
            tmp_counter: AtomicUsize::new(0),
        })
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::SeqCst)
    }

    fn entry_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    fn read(&self, key: &str) -> Result<Option<String>, BackendError> {
        let path = self.entry_path(key);
        match fs::read_to_string(&path) {
            Ok(text) => {
                let entry: CacheEntry = serde_json::from_str(&text)
                    .map_err(|e| BackendError::Cache(format!("corrupt entry {}: {e}", path.display())))?;
                Ok(Some(entry.response))
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(BackendError::Cache(format!("{}: {e}", path.display()))),
        }
    }

    fn write(&self, key: &str, request: &CompletionRequest, response: &str) -> Result<(), BackendError> {
        let entry = CacheEntry {
            key: key.to_string(),
            identity: self.inner.identity().to_string(),
            request: request.clone(),
            response: response.to_string(),
        };
        let text = serde_json::to_string_pretty(&entry).expect("serializable");
        let n = self.tmp_counter.fetch_add(1, Ordering::SeqCst);
        let tmp = self.dir.join(format!(".{key}.{}.{n}.tmp", std::process::id()));
        let io = |e: std::io::Error| BackendError::Cache(format!("{}: {e}", tmp.display()));
        let mut file = fs::File::create(&tmp).map_err(io)?;
        file.write_all(text.as_bytes()).map_err(io)?;
        file.sync_all().map_err(io)?;
        drop(file);
        fs::rename(&tmp, self.entry_path(key)).map_err(io)
    }
}

impl<B: CompletionBackend> CompletionBackend for CachedBackend<B> {
    fn identity(&self) -> &str {
        self.inner.identity()
    }

    fn kind(&self) -> BackendKind {
        self.inner.kind()
    }

    fn supports_constrained_output(&self) -> bool {
        self.inner.supports_constrained_output()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let key = cache_key(self.inner.identity(), request);
        if let Some(hit) = self.read(&key)? {
            self.hits.fetch_add(1, Ordering::SeqCst);
            return Ok(hit);
        }
        let lock = self
            .key_locks
            .lock()
            .unwrap()
            .entry(key.clone())
            .or_default()
            .clone();
        let _guard = lock.lock().unwrap();
        if let Some(hit) = self.read(&key)? {
            self.hits.fetch_add(1, Ordering::SeqCst);
            return Ok(hit);
        }
        self.misses.fetch_add(1, Ordering::SeqCst);
        let response = self.inner.complete(request)?;
        self.write(&key, request, &response)?;
        Ok(response)
    }
}
