//! On-disk cache of downloaded entities, keyed by kind and id.
//!
//! Layout: `<root>/<kind>s/<id>/` with the wire bodies stored verbatim.
//! Entries are written to a temporary sibling directory and renamed into
//! place, so a reader sees either a complete entry or none. Entries that
//! fail to decode are moved to `<root>/quarantine/` and reported as absent.
//!
//! The cache is keyed by id only; switching servers needs a clear.
//! Concurrent processes are safe on a best-effort basis.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::Serialize;
use thiserror::Error;

use crate::model::EntityKind;

#[derive(Debug, Error)]
#[error("cache I/O on {}: {source}", path.display())]
pub struct CacheError {
    pub path: PathBuf,
    #[source]
    pub source: io::Error,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CacheError + '_ {
    move |source| CacheError { path: path.to_path_buf(), source }
}

/// File names making up one entry, in the order they are stored.
pub fn entry_files(kind: EntityKind) -> &'static [&'static str] {
    match kind {
        EntityKind::Dataset => &["description.json", "dataset.arff"],
        EntityKind::Task => &["task.json", "datasplits.arff"],
        EntityKind::Flow => &["flow.json"],
        EntityKind::Run => &["run.json", "predictions.arff"],
    }
}

/// Cached ids per kind.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CacheStatus {
    pub datasets: Vec<u64>,
    pub tasks: Vec<u64>,
    pub flows: Vec<u64>,
    pub runs: Vec<u64>,
}

impl CacheStatus {
    pub fn ids(&self, kind: EntityKind) -> &[u64] {
        match kind {
            EntityKind::Dataset => &self.datasets,
            EntityKind::Task => &self.tasks,
            EntityKind::Flow => &self.flows,
            EntityKind::Run => &self.runs,
        }
    }

    pub fn counts(&self) -> BTreeMap<&'static str, usize> {
        EntityKind::ALL.iter().map(|&k| (k.plural(), self.ids(k).len())).collect()
    }

    pub fn is_empty(&self) -> bool {
        EntityKind::ALL.iter().all(|&k| self.ids(k).is_empty())
    }
}

static UNIQUE: AtomicU64 = AtomicU64::new(0);

fn unique_suffix() -> String {
    format!("{}-{}", std::process::id(), UNIQUE.fetch_add(1, Ordering::Relaxed))
}

#[cfg(test)]
thread_local! {
    static FAIL_BEFORE_RENAME: std::cell::Cell<bool> = const { std::cell::Cell::new(false) };
}

#[derive(Debug, Clone)]
pub struct Cache {
    root: PathBuf,
}

impl Cache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Cache { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn kind_dir(&self, kind: EntityKind) -> PathBuf {
        self.root.join(kind.plural())
    }

    pub fn entry_dir(&self, kind: EntityKind, id: u64) -> PathBuf {
        self.kind_dir(kind).join(id.to_string())
    }

    pub fn contains(&self, kind: EntityKind, id: u64) -> bool {
        self.entry_dir(kind, id).is_dir()
    }

    /// Stores one entry; `contents` follows [`entry_files`] order.
    pub fn store(&self, kind: EntityKind, id: u64, contents: &[&str]) -> Result<PathBuf, CacheError> {
        let names = entry_files(kind);
        assert_eq!(names.len(), contents.len(), "wrong number of files for a {kind} entry");
        let parent = self.kind_dir(kind);
        fs::create_dir_all(&parent).map_err(io_err(&parent))?;
        let tmp = parent.join(format!(".tmp-{id}-{}", unique_suffix()));
        fs::create_dir(&tmp).map_err(io_err(&tmp))?;
        let result = self.fill_and_commit(&tmp, names, contents, kind, id);
        if result.is_err() {
            let _ = fs::remove_dir_all(&tmp);
        }
        result
    }

    fn fill_and_commit(
        &self,
        tmp: &Path,
        names: &[&str],
        contents: &[&str],
        kind: EntityKind,
        id: u64,
    ) -> Result<PathBuf, CacheError> {
        for (name, body) in names.iter().zip(contents) {
            let path = tmp.join(name);
            fs::write(&path, body).map_err(io_err(&path))?;
        }
        #[cfg(test)]
        if FAIL_BEFORE_RENAME.with(|f| f.get()) {
            return Err(CacheError { path: tmp.to_path_buf(), source: io::Error::other("injected failure") });
        }
        let target = self.entry_dir(kind, id);
        match fs::rename(tmp, &target) {
            Ok(()) => Ok(target),
            // Another writer got there first with the same immutable content.
            Err(_) if target.is_dir() => {
                let _ = fs::remove_dir_all(tmp);
                Ok(target)
            }
            Err(e) => Err(CacheError { path: target, source: e }),
        }
    }

    /// Raw file contents of an entry, or `None` when absent or incomplete.
    pub fn read(&self, kind: EntityKind, id: u64) -> Option<Vec<String>> {
        let dir = self.entry_dir(kind, id);
        if !dir.is_dir() {
            return None;
        }
        let files: Result<Vec<String>, io::Error> =
            entry_files(kind).iter().map(|name| fs::read_to_string(dir.join(name))).collect();
        match files {
            Ok(files) => Some(files),
            Err(e) => {
                self.quarantine(kind, id, &e.to_string());
                None
            }
        }
    }

    /// Reads and decodes an entry. Entries that fail to decode are
    /// quarantined and reported as absent.
    pub fn lookup<T, E: std::fmt::Display>(
        &self,
        kind: EntityKind,
        id: u64,
        decode: impl FnOnce(&[String]) -> Result<T, E>,
    ) -> Option<T> {
        let files = self.read(kind, id)?;
        match decode(&files) {
            Ok(v) => Some(v),
            Err(e) => {
                self.quarantine(kind, id, &e.to_string());
                None
            }
        }
    }

    fn quarantine(&self, kind: EntityKind, id: u64, reason: &str) {
        let from = self.entry_dir(kind, id);
        let dir = self.root.join("quarantine");
        let to = dir.join(format!("{}-{id}-{}", kind.plural(), unique_suffix()));
        let moved = fs::create_dir_all(&dir).and_then(|()| fs::rename(&from, &to));
        match moved {
            Ok(()) => log::warn!("corrupt cache entry {} moved to {}: {reason}", from.display(), to.display()),
            Err(e) => {
                log::warn!("corrupt cache entry {} could not be quarantined ({e}): {reason}", from.display());
                let _ = fs::remove_dir_all(&from);
            }
        }
    }

    pub fn remove(&self, kind: EntityKind, id: u64) -> Result<bool, CacheError> {
        let dir = self.entry_dir(kind, id);
        match fs::remove_dir_all(&dir) {
            Ok(()) => Ok(true),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(false),
            Err(e) => Err(CacheError { path: dir, source: e }),
        }
    }

    pub fn status(&self) -> Result<CacheStatus, CacheError> {
        let mut status = CacheStatus::default();
        for kind in EntityKind::ALL {
            let dir = self.kind_dir(kind);
            let entries = match fs::read_dir(&dir) {
                Ok(e) => e,
                Err(e) if e.kind() == io::ErrorKind::NotFound => continue,
                Err(e) => return Err(CacheError { path: dir, source: e }),
            };
            let mut ids: Vec<u64> = entries
                .filter_map(Result::ok)
                .filter(|e| e.path().is_dir())
                .filter_map(|e| e.file_name().to_str().and_then(|n| n.parse().ok()))
                .collect();
            ids.sort_unstable();
            match kind {
                EntityKind::Dataset => status.datasets = ids,
                EntityKind::Task => status.tasks = ids,
                EntityKind::Flow => status.flows = ids,
                EntityKind::Run => status.runs = ids,
            }
        }
        Ok(status)
    }

    /// Removes every cached entry, including quarantined ones.
    pub fn clear(&self) -> Result<(), CacheError> {
        for sub in EntityKind::ALL.iter().map(|k| k.plural()).chain(["quarantine"]) {
            let dir = self.root.join(sub);
            match fs::remove_dir_all(&dir) {
                Ok(()) => {}
                Err(e) if e.kind() == io::ErrorKind::NotFound => {}
                Err(e) => return Err(CacheError { path: dir, source: e }),
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cache() -> (tempfile::TempDir, Cache) {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(dir.path().join("cache"));
        (dir, cache)
    }

    #[test]
    fn empty_lookup_is_absent() {
        let (_d, c) = cache();
        assert!(c.read(EntityKind::Dataset, 15).is_none());
        assert!(c.status().unwrap().is_empty());
    }

    #[test]
    fn store_then_read() {
        let (_d, c) = cache();
        let path = c.store(EntityKind::Dataset, 15, &["{}", "@relation x"]).unwrap();
        assert!(path.ends_with("datasets/15"));
        assert!(path.join("description.json").is_file() && path.join("dataset.arff").is_file());
        assert_eq!(c.read(EntityKind::Dataset, 15).unwrap(), vec!["{}", "@relation x"]);
        c.store(EntityKind::Run, 1816245, &["{}", ""]).unwrap();
        let status = c.status().unwrap();
        assert_eq!(status.runs, vec![1816245]);
        assert_eq!(status.counts()["datasets"], 1);
    }

    #[test]
    fn storing_twice_keeps_one_entry() {
        let (_d, c) = cache();
        c.store(EntityKind::Flow, 7, &["{\"a\":1}"]).unwrap();
        c.store(EntityKind::Flow, 7, &["{\"a\":1}"]).unwrap();
        let names: Vec<_> = fs::read_dir(c.root().join("flows")).unwrap().collect();
        assert_eq!(names.len(), 1);
    }

    #[test]
    fn failure_before_rename_leaves_nothing_readable() {
        let (_d, c) = cache();
        FAIL_BEFORE_RENAME.with(|f| f.set(true));
        let err = c.store(EntityKind::Task, 37, &["{}", "splits"]);
        FAIL_BEFORE_RENAME.with(|f| f.set(false));
        assert!(err.is_err());
        assert!(c.read(EntityKind::Task, 37).is_none());
        assert!(c.status().unwrap().tasks.is_empty());
        assert_eq!(fs::read_dir(c.root().join("tasks")).unwrap().count(), 0);
    }

    #[test]
    fn corrupt_entries_are_quarantined() {
        let (_d, c) = cache();
        c.store(EntityKind::Flow, 3, &["not json"]).unwrap();
        let got = c.lookup(EntityKind::Flow, 3, |files| serde_json::from_str::<serde_json::Value>(&files[0]));
        assert!(got.is_none());
        assert!(!c.contains(EntityKind::Flow, 3));
        assert_eq!(fs::read_dir(c.root().join("quarantine")).unwrap().count(), 1);

        c.store(EntityKind::Run, 4, &["{}", "x"]).unwrap();
        fs::remove_file(c.entry_dir(EntityKind::Run, 4).join("predictions.arff")).unwrap();
        assert!(c.read(EntityKind::Run, 4).is_none());
        assert!(!c.contains(EntityKind::Run, 4));
    }

    #[test]
    fn clear_empties_status() {
        let (_d, c) = cache();
        c.store(EntityKind::Flow, 1, &["{}"]).unwrap();
        c.store(EntityKind::Dataset, 2, &["{}", ""]).unwrap();
        c.clear().unwrap();
        let s = c.status().unwrap();
        assert!(s.is_empty());
        assert_eq!(s.counts().values().sum::<usize>(), 0);
        assert!(c.remove(EntityKind::Flow, 1).is_ok_and(|removed| !removed));
    }
}
