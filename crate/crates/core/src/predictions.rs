//! Prediction files: one JSON record per pair, either full rankings or
//! binary link decisions.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{LinkSet, LinkingDataset};
use crate::error::{Error, Result};
use crate::retrieval::ScoredRanking;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionKind {
    /// Scored rankings, thresholded at evaluation time.
    Ranked,
    /// Accepted links in rank order; every listed target is predicted.
    Links,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub pair_id: String,
    pub method: String,
    pub kind: PredictionKind,
    pub rankings: Vec<ScoredRanking>,
}

impl PredictionRecord {
    /// All links for this pair: top-`k` per source for rankings, or every
    /// listed target for link records.
    pub fn links(&self, k: Option<usize>) -> LinkSet {
        let mut out = LinkSet::new(&self.pair_id);
        for r in &self.rankings {
            let k = match self.kind {
                PredictionKind::Ranked => k.unwrap_or(usize::MAX),
                PredictionKind::Links => usize::MAX,
            };
            out.links.extend(r.top(k).map(|t| (r.source_idx, t)));
        }
        out
    }

    pub fn ranking(&self, source_idx: usize) -> Option<&ScoredRanking> {
        self.rankings.iter().find(|r| r.source_idx == source_idx)
    }

    /// Checks ranking invariants and, when given, index bounds against the pair.
    pub fn validate(&self, dataset: Option<&LinkingDataset>) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for r in &self.rankings {
            if !seen.insert(r.source_idx) {
                return Err(Error::validation(format!(
                    "pair {}: source {} ranked twice",
                    self.pair_id, r.source_idx
                )));
            }
            r.validate()
                .map_err(|e| Error::validation(format!("pair {}: {e}", self.pair_id)))?;
        }
        if let Some(ds) = dataset {
            let pair = ds
                .get(&self.pair_id)
                .ok_or_else(|| Error::validation(format!("unknown pair {}", self.pair_id)))?;
            self.links(None)
                .check_bounds(pair.pair.source.len(), pair.pair.target.len())?;
        }
        Ok(())
    }
}

/// Prediction records keyed by pair id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Predictions {
    pub records: BTreeMap<String, PredictionRecord>,
}

impl Predictions {
    pub fn from_records(records: impl IntoIterator<Item = PredictionRecord>) -> Result<Self> {
        let mut out = BTreeMap::new();
        for r in records {
            let id = r.pair_id.clone();
            if out.insert(id.clone(), r).is_some() {
                return Err(Error::validation(format!("duplicate predictions for pair {id}")));
            }
        }
        Ok(Self { records: out })
    }

    pub fn get(&self, pair_id: &str) -> Option<&PredictionRecord> {
        self.records.get(pair_id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

pub fn read_predictions(reader: impl BufRead) -> Result<Predictions> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PredictionRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        rec.validate(None)
            .map_err(|e| Error::validation(format!("line {}: {e}", i + 1)))?;
        records.push(rec);
    }
    Predictions::from_records(records)
}

pub fn load_predictions(path: &Path) -> Result<Predictions> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_predictions(BufReader::new(f))
}

pub fn write_predictions<'a>(
    records: impl IntoIterator<Item = &'a PredictionRecord>,
    mut w: impl Write,
) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io("<predictions>", e))?;
    }
    Ok(())
}

pub fn save_predictions<'a>(records: impl IntoIterator<Item = &'a PredictionRecord>, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_predictions(records, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}
