//! In-memory session store with idle expiry, LRU eviction and an optional
//! spill directory that survives restarts.
//!
//! The store map is guarded by a short-lived mutex; each session has its
//! own async `RwLock`, so mutations of one session are serialized while
//! reads and other sessions proceed in parallel.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use simexplore_core::export::TableStyle;
use simexplore_core::model::{apply_mapping, Column, Dataset, RawTable, VariableMapping};
use simexplore_core::Measure;
use tokio::sync::RwLock;

use crate::error::ApiError;

/// Per-session display and analysis options.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionOptions {
    pub table: TableStyle,
    /// Measures used when a request does not name any; all when unset.
    pub measures: Option<Vec<Measure>>,
}

#[derive(Debug)]
pub struct Session {
    pub id: String,
    pub source_name: Option<String>,
    pub raw: Arc<RawTable>,
    pub columns: Vec<Column>,
    pub mapping: Option<VariableMapping>,
    pub dataset: Option<Arc<Dataset>>,
    pub options: SessionOptions,
    pub created_at: u64,
}

impl Session {
    pub fn new(raw: RawTable, source_name: Option<String>) -> Self {
        let columns = raw.columns();
        Self {
            id: String::new(),
            source_name,
            raw: Arc::new(raw),
            columns,
            mapping: None,
            dataset: None,
            options: SessionOptions::default(),
            created_at: now_ms(),
        }
    }

    pub fn dataset(&self) -> Result<Arc<Dataset>, ApiError> {
        self.dataset.clone().ok_or_else(ApiError::no_mapping)
    }
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    id: String,
    source_name: Option<String>,
    created_at: u64,
    last_touched: u64,
    raw: RawTable,
    mapping: Option<VariableMapping>,
    options: SessionOptions,
}

struct Entry {
    session: Arc<RwLock<Session>>,
    last_touched: AtomicU64,
}

pub struct SessionStore {
    entries: Mutex<HashMap<String, Arc<Entry>>>,
    ttl: Duration,
    max_sessions: usize,
    spill: Option<PathBuf>,
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// 128 random bits as unpadded url-safe base64 (22 characters).
pub fn new_session_id() -> String {
    URL_SAFE_NO_PAD.encode(rand::random::<[u8; 16]>())
}

fn valid_id(id: &str) -> bool {
    id.len() == 22
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

impl SessionStore {
    /// Opens the store, reloading unexpired sessions from `spill`.
    pub fn open(
        ttl: Duration,
        max_sessions: usize,
        spill: Option<PathBuf>,
    ) -> std::io::Result<Self> {
        let store = Self {
            entries: Mutex::new(HashMap::new()),
            ttl,
            max_sessions: max_sessions.max(1),
            spill,
        };
        if let Some(dir) = &store.spill {
            std::fs::create_dir_all(dir)?;
            store.reload(dir)?;
        }
        Ok(store)
    }

    fn reload(&self, dir: &Path) -> std::io::Result<()> {
        let now = now_ms();
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let snap: Snapshot = match std::fs::read(&path)
                .ok()
                .and_then(|b| serde_json::from_slice(&b).ok())
            {
                Some(s) => s,
                None => {
                    log::warn!("ignoring unreadable session file {}", path.display());
                    continue;
                }
            };
            if !valid_id(&snap.id) || self.expired(snap.last_touched, now) {
                let _ = std::fs::remove_file(&path);
                continue;
            }
            let dataset = snap
                .mapping
                .clone()
                .and_then(|m| apply_mapping(snap.raw.clone(), m).ok())
                .map(Arc::new);
            let mut session = Session::new(snap.raw, snap.source_name);
            session.id = snap.id.clone();
            session.created_at = snap.created_at;
            session.mapping = dataset.as_ref().map(|d| d.mapping.clone());
            session.dataset = dataset;
            session.options = snap.options;
            self.entries.lock().unwrap().insert(
                snap.id,
                Arc::new(Entry {
                    session: Arc::new(RwLock::new(session)),
                    last_touched: AtomicU64::new(snap.last_touched),
                }),
            );
        }
        Ok(())
    }

    fn expired(&self, last_touched: u64, now: u64) -> bool {
        now.saturating_sub(last_touched) > self.ttl.as_millis() as u64
    }

    fn spill_path(&self, id: &str) -> Option<PathBuf> {
        self.spill.as_ref().map(|d| d.join(format!("{id}.json")))
    }

    fn forget(&self, id: &str) {
        if let Some(p) = self.spill_path(id) {
            let _ = std::fs::remove_file(p);
        }
    }

    /// Drops expired sessions, then the least recently used ones until
    /// there is room for one more.
    fn make_room(&self, map: &mut HashMap<String, Arc<Entry>>) {
        let now = now_ms();
        let stale: Vec<String> = map
            .iter()
            .filter(|(_, e)| self.expired(e.last_touched.load(Ordering::Relaxed), now))
            .map(|(k, _)| k.clone())
            .collect();
        for id in stale {
            map.remove(&id);
            self.forget(&id);
        }
        while map.len() >= self.max_sessions {
            let oldest = map
                .iter()
                .min_by_key(|(k, e)| (e.last_touched.load(Ordering::Relaxed), (*k).clone()))
                .map(|(k, _)| k.clone());
            match oldest {
                Some(id) => {
                    map.remove(&id);
                    self.forget(&id);
                }
                None => break,
            }
        }
    }

    pub fn insert(&self, mut session: Session) -> String {
        let mut map = self.entries.lock().unwrap();
        self.make_room(&mut map);
        let mut id = new_session_id();
        while map.contains_key(&id) {
            id = new_session_id();
        }
        session.id = id.clone();
        self.persist(&session);
        map.insert(
            id.clone(),
            Arc::new(Entry {
                session: Arc::new(RwLock::new(session)),
                last_touched: AtomicU64::new(now_ms()),
            }),
        );
        id
    }

    /// Looks up a live session and marks it used.
    pub fn get(&self, id: &str) -> Result<Arc<RwLock<Session>>, ApiError> {
        let mut map = self.entries.lock().unwrap();
        let now = now_ms();
        let entry = map
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::session_not_found(id))?;
        if self.expired(entry.last_touched.load(Ordering::Relaxed), now) {
            map.remove(id);
            self.forget(id);
            return Err(ApiError::session_not_found(id));
        }
        entry.last_touched.store(now, Ordering::Relaxed);
        Ok(entry.session.clone())
    }

    pub fn remove(&self, id: &str) -> bool {
        let removed = self.entries.lock().unwrap().remove(id).is_some();
        if removed {
            self.forget(id);
        }
        removed
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Mirrors a session to the spill directory, if any. Failures are
    /// logged; the in-memory copy stays authoritative.
    pub fn persist(&self, session: &Session) {
        let Some(path) = self.spill_path(&session.id) else {
            return;
        };
        let snap = Snapshot {
            id: session.id.clone(),
            source_name: session.source_name.clone(),
            created_at: session.created_at,
            last_touched: now_ms(),
            raw: (*session.raw).clone(),
            mapping: session.mapping.clone(),
            options: session.options.clone(),
        };
        let tmp = path.with_extension("json.tmp");
        let written = serde_json::to_vec(&snap)
            .map_err(std::io::Error::other)
            .and_then(|bytes| std::fs::write(&tmp, bytes))
            .and_then(|_| std::fs::rename(&tmp, &path));
        if let Err(e) = written {
            log::warn!("could not spill session {}: {e}", session.id);
        }
    }
}
