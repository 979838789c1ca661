//! Annotation session state shared by all request handlers.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use arc_swap::ArcSwap;
use chrono::{DateTime, Utc};
use linkforge_core::annotate::{export_records, import_records, AnnotationRecord, ExportFilter};
use linkforge_core::{CandidateBundle, Decision, Document, LinkingDataset};
use serde::{Deserialize, Serialize};

use crate::error::{ServiceError, ServiceResult};
use crate::store::{DecisionKey, DecisionStore, Submission};

/// Compact once superseded records reach this count and outnumber live ones.
const COMPACT_SLACK: usize = 256;

pub struct SessionConfig {
    pub bundles: Vec<CandidateBundle>,
    pub store: PathBuf,
    pub annotators: BTreeSet<String>,
    pub dataset: Option<LinkingDataset>,
}

/// Immutable view replaced after every stored write.
#[derive(Debug, Default)]
pub struct Snapshot {
    pub live: BTreeMap<DecisionKey, Decision>,
    pub log_len: usize,
}

pub struct Session {
    bundles: Vec<CandidateBundle>,
    index: BTreeMap<(String, usize), usize>,
    annotators: BTreeSet<String>,
    dataset: Option<LinkingDataset>,
    store: Mutex<DecisionStore>,
    snapshot: ArcSwap<Snapshot>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceView {
    pub index: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentView {
    pub doc_id: String,
    pub sentences: Vec<SentenceView>,
}

impl From<&Document> for DocumentView {
    fn from(d: &Document) -> Self {
        Self {
            doc_id: d.doc_id.clone(),
            sentences: d
                .sentences
                .iter()
                .map(|s| SentenceView {
                    index: s.index,
                    text: s.text.clone(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub completed: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Task {
    Task {
        bundle: CandidateBundle,
        /// This annotator's current decisions on the bundle, by target.
        decided: BTreeMap<usize, bool>,
        source_doc: Option<DocumentView>,
        target_doc: Option<DocumentView>,
        progress: Progress,
    },
    Done {
        progress: Progress,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub annotator_id: String,
    pub pair_id: String,
    pub source_idx: usize,
    pub target_idx: usize,
    pub accepted: bool,
    /// Server time is used when absent.
    #[serde(default)]
    pub timestamp: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AckStatus {
    Stored,
    Unchanged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub status: AckStatus,
    pub log_len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSummary {
    pub pair_id: String,
    pub bundles: usize,
    pub candidates: usize,
    pub live_decisions: usize,
    /// Annotators who have decided every candidate of the pair.
    pub completed_by: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportSummary {
    pub stored: usize,
    pub unchanged: usize,
}

/// Orders bundles by first appearance of their pair, then by source index.
fn order_bundles(bundles: Vec<CandidateBundle>) -> Vec<CandidateBundle> {
    let mut first_seen: BTreeMap<String, usize> = BTreeMap::new();
    for b in &bundles {
        let n = first_seen.len();
        first_seen.entry(b.pair_id.clone()).or_insert(n);
    }
    let mut out = bundles;
    out.sort_by_key(|b| (first_seen[&b.pair_id], b.source_idx));
    out
}

impl Session {
    pub fn open(cfg: SessionConfig) -> ServiceResult<Self> {
        if cfg.annotators.is_empty() {
            return Err(ServiceError::BadRequest("no annotator tokens configured".into()));
        }
        let bundles = order_bundles(cfg.bundles);
        let mut index = BTreeMap::new();
        for (i, b) in bundles.iter().enumerate() {
            b.validate()?;
            if index.insert((b.pair_id.clone(), b.source_idx), i).is_some() {
                return Err(ServiceError::BadRequest(format!(
                    "two bundles for pair {} source {}",
                    b.pair_id, b.source_idx
                )));
            }
            if let Some(ds) = &cfg.dataset {
                let p = ds
                    .get(&b.pair_id)
                    .ok_or_else(|| ServiceError::BadRequest(format!("pair {} missing from dataset", b.pair_id)))?;
                let n_t = p.pair.target.len();
                if b.source_idx >= p.pair.source.len() || b.candidates.iter().any(|c| c.target_idx >= n_t) {
                    return Err(ServiceError::BadRequest(format!(
                        "bundle {}/{} points outside its documents",
                        b.pair_id, b.source_idx
                    )));
                }
            }
        }
        let store = DecisionStore::open(cfg.store)?;
        let snapshot = Snapshot {
            live: store.live().map(|d| (key(d), d.clone())).collect(),
            log_len: store.log_len(),
        };
        log::info!(
            "session: {} bundles, {} annotators, {} live decisions replayed",
            bundles.len(),
            cfg.annotators.len(),
            snapshot.live.len()
        );
        Ok(Self {
            bundles,
            index,
            annotators: cfg.annotators,
            dataset: cfg.dataset,
            store: Mutex::new(store),
            snapshot: ArcSwap::from_pointee(snapshot),
        })
    }

    pub fn bundles(&self) -> &[CandidateBundle] {
        &self.bundles
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.load_full()
    }

    pub fn authorize(&self, token: Option<&str>) -> ServiceResult<()> {
        match token {
            None | Some("") => Err(ServiceError::MissingToken),
            Some(t) if self.annotators.contains(t) => Ok(()),
            Some(t) => Err(ServiceError::UnknownAnnotator(t.to_string())),
        }
    }

    fn decided_in(snap: &Snapshot, annotator: &str, b: &CandidateBundle) -> BTreeMap<usize, bool> {
        b.candidates
            .iter()
            .filter_map(|c| {
                snap.live
                    .get(&(annotator.to_string(), b.pair_id.clone(), b.source_idx, c.target_idx))
                    .map(|d| (c.target_idx, d.accepted))
            })
            .collect()
    }

    /// First bundle in session order the annotator has not fully decided.
    pub fn next_task(&self, annotator: &str) -> ServiceResult<Task> {
        self.authorize(Some(annotator))?;
        let snap = self.snapshot();
        let mut next = None;
        let mut completed = 0;
        for b in &self.bundles {
            let decided = Self::decided_in(&snap, annotator, b);
            if decided.len() == b.candidates.len() {
                completed += 1;
            } else if next.is_none() {
                next = Some((b, decided));
            }
        }
        let progress = Progress {
            completed,
            total: self.bundles.len(),
        };
        Ok(match next {
            None => Task::Done { progress },
            Some((b, decided)) => {
                let pair = self.dataset.as_ref().and_then(|ds| ds.get(&b.pair_id));
                Task::Task {
                    bundle: b.clone(),
                    decided,
                    source_doc: pair.map(|p| DocumentView::from(&p.pair.source)),
                    target_doc: pair.map(|p| DocumentView::from(&p.pair.target)),
                    progress,
                }
            }
        })
    }

    fn check_candidate(&self, pair_id: &str, source_idx: usize, target_idx: usize) -> ServiceResult<()> {
        let b = self
            .index
            .get(&(pair_id.to_string(), source_idx))
            .map(|&i| &self.bundles[i])
            .ok_or_else(|| ServiceError::UnknownCandidate(format!("no bundle for pair {pair_id:?} source {source_idx}")))?;
        if b.candidate(target_idx).is_none() {
            let shown: Vec<usize> = b.candidates.iter().map(|c| c.target_idx).collect();
            return Err(ServiceError::UnknownCandidate(format!(
                "target {target_idx} is not a candidate of pair {pair_id:?} source {source_idx} (candidates: {shown:?})"
            )));
        }
        Ok(())
    }

    /// Validates and durably records one decision. Returns once the log
    /// write is synced.
    pub fn submit(&self, req: DecisionRequest) -> ServiceResult<Ack> {
        self.authorize(Some(&req.annotator_id))?;
        self.check_candidate(&req.pair_id, req.source_idx, req.target_idx)?;
        let d = Decision {
            annotator_id: req.annotator_id,
            pair_id: req.pair_id,
            source_idx: req.source_idx,
            target_idx: req.target_idx,
            accepted: req.accepted,
            timestamp: req.timestamp.unwrap_or_else(Utc::now),
        };
        let mut store = self.store.lock().unwrap_or_else(|e| e.into_inner());
        let status = match store.submit(d)? {
            Submission::Unchanged => AckStatus::Unchanged,
            Submission::Stored => {
                let superseded = store.log_len() - store.live_len();
                if superseded >= COMPACT_SLACK && superseded > store.live_len() {
                    if let Err(e) = store.compact() {
                        log::warn!("compaction failed, continuing with full log: {e}");
                    }
                }
                self.publish(&store);
                AckStatus::Stored
            }
        };
        Ok(Ack {
            status,
            log_len: store.log_len(),
        })
    }

    fn publish(&self, store: &DecisionStore) {
        self.snapshot.store(Arc::new(Snapshot {
            live: store.live().map(|d| (key(d), d.clone())).collect(),
            log_len: store.log_len(),
        }));
    }

    /// Rewrites the log with live records only; history goes to the archive.
    pub fn compact(&self) -> ServiceResult<()> {
        let mut store = self.store.lock().unwrap_or_else(|e| e.into_inner());
        store.compact()?;
        self.publish(&store);
        Ok(())
    }

    pub fn export(&self, filter: &ExportFilter) -> Vec<AnnotationRecord> {
        let snap = self.snapshot();
        let live: Vec<Decision> = snap.live.values().cloned().collect();
        export_records(&self.bundles, &live, filter)
    }

    /// Replays exported records through the normal submission path.
    pub fn import(&self, records: &[AnnotationRecord]) -> ServiceResult<ImportSummary> {
        let mut summary = ImportSummary::default();
        for d in import_records(records) {
            let ack = self.submit(DecisionRequest {
                annotator_id: d.annotator_id,
                pair_id: d.pair_id,
                source_idx: d.source_idx,
                target_idx: d.target_idx,
                accepted: d.accepted,
                timestamp: Some(d.timestamp),
            })?;
            match ack.status {
                AckStatus::Stored => summary.stored += 1,
                AckStatus::Unchanged => summary.unchanged += 1,
            }
        }
        Ok(summary)
    }

    pub fn pairs(&self) -> Vec<PairSummary> {
        let snap = self.snapshot();
        let mut out: Vec<PairSummary> = Vec::new();
        for b in &self.bundles {
            if out.last().is_none_or(|p| p.pair_id != b.pair_id) {
                out.push(PairSummary {
                    pair_id: b.pair_id.clone(),
                    bundles: 0,
                    candidates: 0,
                    live_decisions: 0,
                    completed_by: Vec::new(),
                });
            }
            let p = out.last_mut().expect("pushed above");
            p.bundles += 1;
            p.candidates += b.candidates.len();
        }
        for p in &mut out {
            p.live_decisions = snap.live.keys().filter(|k| k.1 == p.pair_id).count();
            let pair_bundles: Vec<&CandidateBundle> = self.bundles.iter().filter(|b| b.pair_id == p.pair_id).collect();
            p.completed_by = self
                .annotators
                .iter()
                .filter(|a| {
                    pair_bundles
                        .iter()
                        .all(|b| Self::decided_in(&snap, a, b).len() == b.candidates.len())
                })
                .cloned()
                .collect();
        }
        out
    }

    #[cfg(test)]
    pub(crate) fn break_store(&self) {
        self.store.lock().unwrap().break_writer();
    }
}

fn key(d: &Decision) -> DecisionKey {
    (d.annotator_id.clone(), d.pair_id.clone(), d.source_idx, d.target_idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use linkforge_core::annotate::{Candidate, Provenance};

    fn bundle(pair: &str, src: usize, targets: &[usize]) -> CandidateBundle {
        CandidateBundle {
            pair_id: pair.into(),
            source_idx: src,
            seed: 1,
            candidates: targets
                .iter()
                .map(|&t| Candidate {
                    target_idx: t,
                    provenance: Provenance::RANDOM,
                })
                .collect(),
        }
    }

    fn fixture() -> Vec<CandidateBundle> {
        vec![
            bundle("q", 0, &[1]),
            bundle("p", 3, &[0, 2]),
            bundle("p", 1, &[4]),
            bundle("q", 2, &[0, 1]),
        ]
    }

    fn session(dir: &std::path::Path) -> Session {
        Session::open(SessionConfig {
            bundles: fixture(),
            store: dir.join("decisions.jsonl"),
            annotators: ["ann-a", "ann-b"].map(String::from).into(),
            dataset: None,
        })
        .unwrap()
    }

    fn req(who: &str, pair: &str, s: usize, t: usize, accepted: bool) -> DecisionRequest {
        DecisionRequest {
            annotator_id: who.into(),
            pair_id: pair.into(),
            source_idx: s,
            target_idx: t,
            accepted,
            timestamp: None,
        }
    }

    fn current(task: &Task) -> Option<(&str, usize)> {
        match task {
            Task::Task { bundle, .. } => Some((&bundle.pair_id, bundle.source_idx)),
            Task::Done { .. } => None,
        }
    }

    #[test]
    fn order_is_pair_first_then_source() {
        let order: Vec<(String, usize)> = order_bundles(fixture())
            .into_iter()
            .map(|b| (b.pair_id, b.source_idx))
            .collect();
        let want = [("q", 0), ("q", 2), ("p", 1), ("p", 3)].map(|(p, s)| (p.to_string(), s));
        assert_eq!(order, want);
    }

    #[test]
    fn scripted_session_walks_bundles_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let s = session(dir.path());
        assert_eq!(current(&s.next_task("ann-a").unwrap()), Some(("q", 0)));
        s.submit(req("ann-a", "q", 0, 1, true)).unwrap();
        // Mid-pair: stays within q.
        assert_eq!(current(&s.next_task("ann-a").unwrap()), Some(("q", 2)));
        s.submit(req("ann-a", "q", 2, 0, false)).unwrap();
        let t = s.next_task("ann-a").unwrap();
        assert_eq!(current(&t), Some(("q", 2)));
        let Task::Task { decided, progress, .. } = t else { unreachable!() };
        assert_eq!(decided, BTreeMap::from([(0, false)]));
        assert_eq!(progress, Progress { completed: 1, total: 4 });
        // Other annotators are unaffected.
        assert_eq!(current(&s.next_task("ann-b").unwrap()), Some(("q", 0)));
        for (p, src, t) in [("q", 2, 1), ("p", 1, 4), ("p", 3, 0), ("p", 3, 2)] {
            s.submit(req("ann-a", p, src, t, false)).unwrap();
        }
        assert!(matches!(
            s.next_task("ann-a").unwrap(),
            Task::Done {
                progress: Progress { completed: 4, total: 4 }
            }
        ));
        let pairs = s.pairs();
        assert_eq!(pairs[0].pair_id, "q");
        assert_eq!(pairs[0].completed_by, vec!["ann-a".to_string()]);
        assert_eq!(pairs[1].candidates, 3);
    }

    #[test]
    fn auth_and_candidate_checks() {
        let dir = tempfile::tempdir().unwrap();
        let s = session(dir.path());
        assert!(matches!(s.next_task("mallory"), Err(ServiceError::UnknownAnnotator(_))));
        assert!(matches!(s.authorize(None), Err(ServiceError::MissingToken)));
        let e = s.submit(req("ann-a", "q", 0, 7, true)).unwrap_err();
        assert!(matches!(e, ServiceError::UnknownCandidate(_)));
        assert!(e.to_string().contains("candidates: [1]"));
        assert!(matches!(
            s.submit(req("ann-a", "zz", 0, 1, true)),
            Err(ServiceError::UnknownCandidate(_))
        ));
        assert_eq!(s.snapshot().log_len, 0);
    }

    #[test]
    fn idempotence_and_flip() {
        let dir = tempfile::tempdir().unwrap();
        let s = session(dir.path());
        let a = s.submit(req("ann-a", "q", 0, 1, true)).unwrap();
        let b = s.submit(req("ann-a", "q", 0, 1, true)).unwrap();
        assert_eq!((a.status, b.status), (AckStatus::Stored, AckStatus::Unchanged));
        assert_eq!(s.snapshot().live.len(), 1);
        let c = s.submit(req("ann-a", "q", 0, 1, false)).unwrap();
        assert_eq!((c.status, c.log_len), (AckStatus::Stored, 2));
        assert_eq!(s.snapshot().live.len(), 1);
    }

    #[test]
    fn store_failure_is_retryable_and_leaves_state_alone() {
        let dir = tempfile::tempdir().unwrap();
        let s = session(dir.path());
        s.submit(req("ann-a", "q", 0, 1, true)).unwrap();
        s.break_store();
        let e = s.submit(req("ann-b", "q", 0, 1, true)).unwrap_err();
        assert!(e.is_retryable(), "{e}");
        let snap = s.snapshot();
        assert_eq!((snap.live.len(), snap.log_len), (1, 1));
    }

    #[test]
    fn restart_resumes_at_same_bundle() {
        let dir = tempfile::tempdir().unwrap();
        let before = {
            let s = session(dir.path());
            s.submit(req("ann-a", "q", 0, 1, true)).unwrap();
            s.submit(req("ann-a", "q", 2, 1, true)).unwrap();
            s.next_task("ann-a").unwrap()
        };
        let s = session(dir.path());
        assert_eq!(s.next_task("ann-a").unwrap(), before);
    }

    #[test]
    fn export_import_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = session(dir.path());
        assert!(s.export(&ExportFilter::default()).is_empty());
        s.submit(req("ann-a", "q", 0, 1, true)).unwrap();
        s.submit(req("ann-b", "q", 0, 1, false)).unwrap();
        s.submit(req("ann-b", "p", 3, 2, true)).unwrap();
        let all = s.export(&ExportFilter::default());
        assert_eq!(all.len(), 2);
        let only_b = s.export(&ExportFilter {
            annotator: Some("ann-b".into()),
            ..Default::default()
        });
        assert_eq!(only_b.iter().map(|r| r.decisions.len()).sum::<usize>(), 2);

        let other = tempfile::tempdir().unwrap();
        let t = session(other.path());
        assert_eq!(t.import(&all).unwrap(), ImportSummary { stored: 3, unchanged: 0 });
        assert_eq!(t.snapshot().live, s.snapshot().live);
        assert_eq!(t.import(&all).unwrap(), ImportSummary { stored: 0, unchanged: 3 });
    }

    #[test]
    fn compaction_preserves_live_view() {
        let dir = tempfile::tempdir().unwrap();
        let s = session(dir.path());
        for i in 0..COMPACT_SLACK + 2 {
            s.submit(req("ann-a", "q", 0, 1, i % 2 == 0)).unwrap();
        }
        let snap = s.snapshot();
        assert!(snap.log_len < COMPACT_SLACK, "log was compacted: {}", snap.log_len);
        assert_eq!(snap.live.len(), 1);
        let reopened = session(dir.path());
        assert_eq!(reopened.snapshot().live, snap.live);
    }

    #[test]
    fn dataset_bounds_are_checked() {
        use linkforge_core::corpus::{LinkSet, LinkedPair, Role};
        use linkforge_core::{Document, DocumentPair, Domain};
        let pair = LinkedPair {
            pair: DocumentPair {
                pair_id: "q".into(),
                source: Document::from_texts("s", Role::Source, ["a", "b", "c"]).unwrap(),
                target: Document::from_texts("t", Role::Target, ["x", "y"]).unwrap(),
                meta: Default::default(),
            },
            links: LinkSet::new("q"),
        };
        let ds = LinkingDataset::new("d", Domain::News, vec![pair]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let open = |bundles| {
            Session::open(SessionConfig {
                bundles,
                store: dir.path().join("log.jsonl"),
                annotators: ["a".to_string()].into(),
                dataset: Some(ds.clone()),
            })
        };
        assert!(open(vec![bundle("q", 0, &[5])]).is_err());
        let s = open(vec![bundle("q", 2, &[0, 1])]).unwrap();
        let Task::Task { source_doc, target_doc, .. } = s.next_task("a").unwrap() else { panic!() };
        assert_eq!(source_doc.unwrap().sentences.len(), 3);
        assert_eq!(target_doc.unwrap().doc_id, "t");
    }
}
