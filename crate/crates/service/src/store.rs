//! Append-only decision log with an in-memory view of the live decisions.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use linkforge_core::Decision;

use crate::error::{ServiceError, ServiceResult};

/// `(annotator, pair, source, target)`.
pub type DecisionKey = (String, String, usize, usize);

fn key_of(d: &Decision) -> DecisionKey {
    (d.annotator_id.clone(), d.pair_id.clone(), d.source_idx, d.target_idx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Submission {
    /// Appended to the log and now live.
    Stored,
    /// Same verdict as the live decision; nothing written.
    Unchanged,
}

/// Every submission is appended and synced before it is acknowledged.
/// The newest record per key is live; superseded records stay in the log.
pub struct DecisionStore {
    path: PathBuf,
    file: File,
    live: BTreeMap<DecisionKey, Decision>,
    log_len: usize,
}

impl DecisionStore {
    /// Opens the log at `path`, replaying it. A torn final line from an
    /// interrupted write is dropped; damage anywhere else is an error.
    pub fn open(path: impl Into<PathBuf>) -> ServiceResult<Self> {
        let path = path.into();
        let mut live = BTreeMap::new();
        let mut log_len = 0;
        let mut valid_bytes = 0u64;
        if path.exists() {
            let f = File::open(&path).map_err(|e| ServiceError::storage(&path, e))?;
            let lines: Vec<String> = BufReader::new(f)
                .lines()
                .collect::<Result<_, _>>()
                .map_err(|e| ServiceError::storage(&path, e))?;
            let n = lines.len();
            for (i, line) in lines.iter().enumerate() {
                if line.trim().is_empty() {
                    valid_bytes += line.len() as u64 + 1;
                    continue;
                }
                match serde_json::from_str::<Decision>(line) {
                    Ok(d) => {
                        live.insert(key_of(&d), d);
                        log_len += 1;
                        valid_bytes += line.len() as u64 + 1;
                    }
                    Err(e) if i + 1 == n => {
                        log::warn!("{}: dropping torn final record: {e}", path.display());
                    }
                    Err(e) => {
                        return Err(ServiceError::Corrupt(format!("{} line {}: {e}", path.display(), i + 1)));
                    }
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| ServiceError::storage(&path, e))?;
        if path.metadata().map(|m| m.len()).unwrap_or(0) > valid_bytes {
            file.set_len(valid_bytes).map_err(|e| ServiceError::storage(&path, e))?;
        }
        Ok(Self {
            path,
            file,
            live,
            log_len,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Records in the log, superseded ones included.
    pub fn log_len(&self) -> usize {
        self.log_len
    }

    pub fn live(&self) -> impl Iterator<Item = &Decision> {
        self.live.values()
    }

    pub fn live_len(&self) -> usize {
        self.live.len()
    }

    pub fn get(&self, key: &DecisionKey) -> Option<&Decision> {
        self.live.get(key)
    }

    pub fn submit(&mut self, d: Decision) -> ServiceResult<Submission> {
        let key = key_of(&d);
        if self.live.get(&key).is_some_and(|cur| cur.accepted == d.accepted) {
            return Ok(Submission::Unchanged);
        }
        let mut line = serde_json::to_vec(&d).map_err(|e| ServiceError::Corrupt(e.to_string()))?;
        line.push(b'\n');
        self.file
            .write_all(&line)
            .and_then(|_| self.file.sync_data())
            .map_err(|e| ServiceError::storage(&self.path, e))?;
        self.live.insert(key, d);
        self.log_len += 1;
        Ok(Submission::Stored)
    }

    /// Moves the full log to `<log>.archive` (appending) and rewrites the
    /// log with live records only.
    pub fn compact(&mut self) -> ServiceResult<()> {
        let archive = self.path.with_extension("archive");
        let current = fs::read(&self.path).map_err(|e| ServiceError::storage(&self.path, e))?;
        let mut a = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&archive)
            .map_err(|e| ServiceError::storage(&archive, e))?;
        a.write_all(&current)
            .and_then(|_| a.sync_data())
            .map_err(|e| ServiceError::storage(&archive, e))?;

        let tmp = self.path.with_extension("tmp");
        let mut body = Vec::new();
        for d in self.live.values() {
            serde_json::to_writer(&mut body, d).map_err(|e| ServiceError::Corrupt(e.to_string()))?;
            body.push(b'\n');
        }
        let mut t = File::create(&tmp).map_err(|e| ServiceError::storage(&tmp, e))?;
        t.write_all(&body)
            .and_then(|_| t.sync_data())
            .map_err(|e| ServiceError::storage(&tmp, e))?;
        fs::rename(&tmp, &self.path).map_err(|e| ServiceError::storage(&self.path, e))?;
        self.file = OpenOptions::new()
            .append(true)
            .open(&self.path)
            .map_err(|e| ServiceError::storage(&self.path, e))?;
        self.log_len = self.live.len();
        Ok(())
    }

    /// Swaps the writer for a read-only handle so every append fails.
    #[cfg(test)]
    pub(crate) fn break_writer(&mut self) {
        self.file = File::open(&self.path).unwrap();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn decision(who: &str, t: usize, accepted: bool) -> Decision {
        Decision {
            annotator_id: who.into(),
            pair_id: "p".into(),
            source_idx: 0,
            target_idx: t,
            accepted,
            timestamp: Utc.with_ymd_and_hms(2025, 5, 1, 9, 0, 0).unwrap(),
        }
    }

    #[test]
    fn idempotent_and_superseding_submissions() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = DecisionStore::open(dir.path().join("log.jsonl")).unwrap();
        assert_eq!(s.submit(decision("a", 1, true)).unwrap(), Submission::Stored);
        assert_eq!(s.submit(decision("a", 1, true)).unwrap(), Submission::Unchanged);
        assert_eq!((s.live_len(), s.log_len()), (1, 1));
        assert_eq!(s.submit(decision("a", 1, false)).unwrap(), Submission::Stored);
        assert_eq!((s.live_len(), s.log_len()), (1, 2));
        assert!(!s.live().next().unwrap().accepted);
    }

    #[test]
    fn replay_after_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        {
            let mut s = DecisionStore::open(&path).unwrap();
            s.submit(decision("a", 1, true)).unwrap();
            s.submit(decision("a", 1, false)).unwrap();
            s.submit(decision("b", 2, true)).unwrap();
        }
        let s = DecisionStore::open(&path).unwrap();
        assert_eq!((s.live_len(), s.log_len()), (2, 3));
    }

    #[test]
    fn torn_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        {
            let mut s = DecisionStore::open(&path).unwrap();
            s.submit(decision("a", 1, true)).unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"annotator_id\":\"a\",\"pai").unwrap();
        drop(f);
        let mut s = DecisionStore::open(&path).unwrap();
        assert_eq!(s.log_len(), 1);
        s.submit(decision("a", 2, true)).unwrap();
        let s = DecisionStore::open(&path).unwrap();
        assert_eq!(s.log_len(), 2);
    }

    #[test]
    fn corrupt_middle_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let good = serde_json::to_string(&decision("a", 1, true)).unwrap();
        fs::write(&path, format!("{good}\nnot json\n{good}\n")).unwrap();
        assert!(matches!(DecisionStore::open(&path), Err(ServiceError::Corrupt(_))));
    }

    #[test]
    fn compaction_keeps_history_in_archive() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let mut s = DecisionStore::open(&path).unwrap();
        s.submit(decision("a", 1, true)).unwrap();
        s.submit(decision("a", 1, false)).unwrap();
        s.compact().unwrap();
        assert_eq!(s.log_len(), 1);
        s.submit(decision("a", 3, true)).unwrap();
        let archived = fs::read_to_string(path.with_extension("archive")).unwrap();
        assert_eq!(archived.lines().count(), 2);
        let s = DecisionStore::open(&path).unwrap();
        assert_eq!((s.live_len(), s.log_len()), (2, 2));
    }
}
