//! On-disk session snapshots, one JSON file per session.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use egal_core::engine::{EngineError, Event, Session, SessionSnapshot};
use egal_core::Dataset;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::api::SessionHandle;
use crate::Entry;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {1}", path = .0.display())]
    Io(PathBuf, std::io::Error),
    #[error("{path}: {1}", path = .0.display())]
    Json(PathBuf, serde_json::Error),
    #[error("{path}: {1}", path = .0.display())]
    Restore(PathBuf, EngineError),
}

#[derive(Serialize, Deserialize)]
struct Stored {
    handle: SessionHandle,
    pending_events: Vec<Event>,
    snapshot: SessionSnapshot,
}

fn path_for(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.json"))
}

/// Writes atomically: a temporary file in the same directory, then rename.
pub(crate) fn save(dir: &Path, entry: &Entry) -> Result<(), StoreError> {
    let stored = Stored {
        handle: entry.handle.clone(),
        pending_events: entry.pending_events.clone(),
        snapshot: entry.session.snapshot(),
    };
    let path = path_for(dir, &entry.handle.session_id);
    let tmp = path.with_extension("json.tmp");
    let bytes = serde_json::to_vec(&stored).map_err(|e| StoreError::Json(path.clone(), e))?;
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, &path)
    };
    write().map_err(|e| StoreError::Io(path.clone(), e))
}

pub(crate) fn load_all(
    dir: &Path,
    datasets: &HashMap<String, Arc<Dataset>>,
) -> Result<Vec<Entry>, StoreError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| StoreError::Io(dir.to_path_buf(), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut entries = Vec::with_capacity(paths.len());
    for path in paths {
        let text = fs::read_to_string(&path).map_err(|e| StoreError::Io(path.clone(), e))?;
        let stored: Stored = serde_json::from_str(&text).map_err(|e| StoreError::Json(path.clone(), e))?;
        let Some(dataset) = datasets.get(&stored.handle.dataset) else {
            log::warn!(
                "skipping {}: dataset `{}` is not loaded",
                path.display(),
                stored.handle.dataset
            );
            continue;
        };
        let session = Session::restore(stored.snapshot, dataset.clone())
            .map_err(|e| StoreError::Restore(path.clone(), e))?;
        entries.push(Entry {
            handle: stored.handle,
            session,
            pending_events: stored.pending_events,
        });
    }
    Ok(entries)
}
