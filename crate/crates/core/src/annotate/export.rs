use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{CandidateBundle, Decision, Provenance};

/// One exported line: a candidate with every annotator's decision on it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub pair_id: String,
    pub source_idx: usize,
    pub target_idx: usize,
    pub provenance: Provenance,
    pub decisions: BTreeMap<String, bool>,
    /// Time of the most recent decision on this candidate.
    pub timestamp: DateTime<Utc>,
    /// Per-annotator decision times.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub decided_at: BTreeMap<String, DateTime<Utc>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExportFilter {
    pub annotator: Option<String>,
    pub pair_id: Option<String>,
}

impl ExportFilter {
    fn keeps(&self, d: &Decision) -> bool {
        self.annotator.as_ref().is_none_or(|a| *a == d.annotator_id) && self.pair_id.as_ref().is_none_or(|p| *p == d.pair_id)
    }
}

/// Export rows in bundle order for every candidate with a kept decision.
///
/// `decisions` are the live decisions, one per key.
pub fn export_records(bundles: &[CandidateBundle], decisions: &[Decision], filter: &ExportFilter) -> Vec<AnnotationRecord> {
    let mut by_candidate: BTreeMap<(&str, usize, usize), Vec<&Decision>> = BTreeMap::new();
    for d in decisions.iter().filter(|d| filter.keeps(d)) {
        by_candidate
            .entry((d.pair_id.as_str(), d.source_idx, d.target_idx))
            .or_default()
            .push(d);
    }
    let mut out = Vec::new();
    for b in bundles {
        for c in &b.candidates {
            let Some(ds) = by_candidate.get(&(b.pair_id.as_str(), b.source_idx, c.target_idx)) else {
                continue;
            };
            out.push(AnnotationRecord {
                pair_id: b.pair_id.clone(),
                source_idx: b.source_idx,
                target_idx: c.target_idx,
                provenance: c.provenance,
                decisions: ds.iter().map(|d| (d.annotator_id.clone(), d.accepted)).collect(),
                timestamp: ds.iter().map(|d| d.timestamp).max().expect("non-empty"),
                decided_at: ds.iter().map(|d| (d.annotator_id.clone(), d.timestamp)).collect(),
            });
        }
    }
    out
}

/// Decisions carried by export rows.
pub fn import_records(records: &[AnnotationRecord]) -> Vec<Decision> {
    records
        .iter()
        .flat_map(|r| {
            r.decisions.iter().map(|(who, &accepted)| Decision {
                annotator_id: who.clone(),
                pair_id: r.pair_id.clone(),
                source_idx: r.source_idx,
                target_idx: r.target_idx,
                accepted,
                timestamp: r.decided_at.get(who).copied().unwrap_or(r.timestamp),
            })
        })
        .collect()
}

pub fn read_records(reader: impl BufRead) -> Result<Vec<AnnotationRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_records(records: &[AnnotationRecord], mut w: impl Write) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io("<export>", e))?;
    }
    Ok(())
}

/// Reads a bundle file, one bundle per line, validating each.
pub fn read_bundles(reader: impl BufRead) -> Result<Vec<CandidateBundle>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let parse = |message: String| Error::Parse { line: i + 1, message };
        let line = line.map_err(|e| parse(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let b: CandidateBundle = serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
        b.validate()?;
        out.push(b);
    }
    Ok(out)
}

pub fn write_bundles(bundles: &[CandidateBundle], mut w: impl Write) -> Result<()> {
    for b in bundles {
        serde_json::to_writer(&mut w, b)?;
        w.write_all(b"\n").map_err(|e| Error::io("<bundles>", e))?;
    }
    Ok(())
}

pub fn load_bundles(path: impl AsRef<Path>) -> Result<Vec<CandidateBundle>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_bundles(BufReader::new(f))
}

pub fn save_bundles(bundles: &[CandidateBundle], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_bundles(bundles, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::Candidate;
    use chrono::TimeZone;

    fn bundles() -> Vec<CandidateBundle> {
        vec![CandidateBundle {
            pair_id: "p".into(),
            source_idx: 2,
            seed: 7,
            candidates: vec![
                Candidate {
                    target_idx: 1,
                    provenance: Provenance::suggested(true, true).unwrap(),
                },
                Candidate {
                    target_idx: 5,
                    provenance: Provenance::RANDOM,
                },
            ],
        }]
    }

    fn decision(who: &str, t: usize, accepted: bool, minute: u32) -> Decision {
        Decision {
            annotator_id: who.into(),
            pair_id: "p".into(),
            source_idx: 2,
            target_idx: t,
            accepted,
            timestamp: Utc.with_ymd_and_hms(2025, 3, 1, 12, minute, 0).unwrap(),
        }
    }

    #[test]
    fn empty_store_exports_nothing() {
        assert!(export_records(&bundles(), &[], &ExportFilter::default()).is_empty());
    }

    #[test]
    fn round_trip_is_lossless() {
        let ds = vec![decision("a", 1, true, 1), decision("b", 1, false, 3), decision("a", 5, false, 2)];
        let recs = export_records(&bundles(), &ds, &ExportFilter::default());
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].timestamp, ds[1].timestamp);
        let mut buf = Vec::new();
        write_records(&recs, &mut buf).unwrap();
        let back = read_records(buf.as_slice()).unwrap();
        assert_eq!(back, recs);
        let mut imported = import_records(&back);
        let mut original = ds.clone();
        imported.sort_by(|x, y| x.key().cmp(&y.key()));
        original.sort_by(|x, y| x.key().cmp(&y.key()));
        assert_eq!(imported, original);
        let line: serde_json::Value = serde_json::from_slice(buf.split(|&c| c == b'\n').next().unwrap()).unwrap();
        assert_eq!(line["provenance"], serde_json::json!(["rllm", "retriever"]));
        assert_eq!(line["decisions"]["a"], true);
    }

    #[test]
    fn bundle_file_round_trip() {
        let mut buf = Vec::new();
        write_bundles(&bundles(), &mut buf).unwrap();
        assert_eq!(read_bundles(buf.as_slice()).unwrap(), bundles());
        let dup = r#"{"pair_id":"p","source_idx":0,"seed":1,"candidates":[{"target_idx":1,"provenance":["random"]},{"target_idx":1,"provenance":["random"]}]}"#;
        assert!(read_bundles(dup.as_bytes()).is_err());
    }

    #[test]
    fn annotator_filter() {
        let ds = vec![decision("a", 1, true, 1), decision("b", 1, false, 3), decision("b", 5, true, 2)];
        let only_b = ExportFilter {
            annotator: Some("b".into()),
            ..Default::default()
        };
        let recs = export_records(&bundles(), &ds, &only_b);
        assert_eq!(import_records(&recs).len(), 2);
        assert!(recs.iter().all(|r| r.decisions.keys().all(|k| k == "b")));
        let other_pair = ExportFilter {
            pair_id: Some("q".into()),
            ..Default::default()
        };
        assert!(export_records(&bundles(), &ds, &other_pair).is_empty());
    }
}
