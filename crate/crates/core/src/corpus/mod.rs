//! Linked document pairs: data model, line-delimited storage, sentence
//! segmentation, conversions of external corpora and corpus statistics.

mod convert;
mod io;
mod segment;
mod stats;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use convert::{convert_ecb, convert_f1000, EcbMention, EcbRecord, F1000Candidate, F1000Record, MentionSide};
pub use io::{load_dataset, parse_dataset, read_dataset, save_dataset, write_dataset, DocRecord, PairRecord};
pub use segment::{segment_text, RuleSegmenter, Segmenter};
pub use stats::{compute_stats, DatasetStats};

pub type Meta = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub index: usize,
    pub text: String,
}

impl Sentence {
    pub fn new(index: usize, text: impl Into<String>) -> Self {
        Self {
            index,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Source,
    Target,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub role: Role,
    pub sentences: Vec<Sentence>,
    pub meta: Meta,
}

impl Document {
    /// Builds a document from sentence texts, assigning indices `0..n`.
    pub fn from_texts<S: Into<String>>(
        doc_id: impl Into<String>,
        role: Role,
        texts: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let sentences = texts
            .into_iter()
            .enumerate()
            .map(|(i, t)| Sentence::new(i, t))
            .collect();
        let doc = Self {
            doc_id: doc_id.into(),
            role,
            sentences,
            meta: Meta::new(),
        };
        doc.validate()?;
        Ok(doc)
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn sentence(&self, index: usize) -> Option<&Sentence> {
        self.sentences.get(index)
    }

    /// Whole document text, sentences joined by single spaces.
    pub fn text(&self) -> String {
        self.sentences
            .iter()
            .map(|s| s.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn validate(&self) -> Result<()> {
        if self.sentences.is_empty() {
            return Err(Error::validation(format!("document {:?} has no sentences", self.doc_id)));
        }
        for (pos, s) in self.sentences.iter().enumerate() {
            if s.index != pos {
                return Err(Error::validation(format!(
                    "document {:?}: sentence at position {pos} has index {}",
                    self.doc_id, s.index
                )));
            }
            if s.text.trim().is_empty() {
                return Err(Error::validation(format!(
                    "document {:?}: sentence {pos} is empty",
                    self.doc_id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentPair {
    pub pair_id: String,
    pub source: Document,
    pub target: Document,
    pub meta: Meta,
}

/// Sentence-level links for one document pair, as `(source_idx, target_idx)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkSet {
    pub pair_id: String,
    pub links: BTreeSet<(usize, usize)>,
}

impl LinkSet {
    pub fn new(pair_id: impl Into<String>) -> Self {
        Self {
            pair_id: pair_id.into(),
            links: BTreeSet::new(),
        }
    }

    pub fn from_pairs(pair_id: impl Into<String>, links: impl IntoIterator<Item = (usize, usize)>) -> Self {
        Self {
            pair_id: pair_id.into(),
            links: links.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn contains(&self, source_idx: usize, target_idx: usize) -> bool {
        self.links.contains(&(source_idx, target_idx))
    }

    /// Gold targets of one source sentence.
    pub fn targets_of(&self, source_idx: usize) -> BTreeSet<usize> {
        self.links
            .range((source_idx, 0)..=(source_idx, usize::MAX))
            .map(|&(_, t)| t)
            .collect()
    }

    pub fn sources(&self) -> BTreeSet<usize> {
        self.links.iter().map(|&(s, _)| s).collect()
    }

    pub fn targets(&self) -> BTreeSet<usize> {
        self.links.iter().map(|&(_, t)| t).collect()
    }

    pub fn is_subset(&self, other: &LinkSet) -> bool {
        self.links.is_subset(&other.links)
    }

    pub fn extend(&mut self, other: &LinkSet) {
        self.links.extend(other.links.iter().copied());
    }

    pub fn check_bounds(&self, n_source: usize, n_target: usize) -> Result<()> {
        for &(s, t) in &self.links {
            if s >= n_source || t >= n_target {
                return Err(Error::validation(format!(
                    "pair {:?}: link ({s}, {t}) out of range for {n_source}x{n_target} sentences",
                    self.pair_id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    News,
    Reviews,
    #[default]
    Other,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::News => "news",
            Domain::Reviews => "reviews",
            Domain::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "news" => Some(Domain::News),
            "reviews" | "review" => Some(Domain::Reviews),
            "other" => Some(Domain::Other),
            _ => None,
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkedPair {
    pub pair: DocumentPair,
    pub links: LinkSet,
}

impl LinkedPair {
    pub fn pair_id(&self) -> &str {
        &self.pair.pair_id
    }

    pub fn validate(&self) -> Result<()> {
        self.pair.source.validate()?;
        self.pair.target.validate()?;
        if self.links.pair_id != self.pair.pair_id {
            return Err(Error::validation(format!(
                "link set for {:?} attached to pair {:?}",
                self.links.pair_id, self.pair.pair_id
            )));
        }
        self.links
            .check_bounds(self.pair.source.len(), self.pair.target.len())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkingDataset {
    pub name: String,
    pub domain: Domain,
    pub pairs: Vec<LinkedPair>,
}

impl LinkingDataset {
    /// Validates every pair and the uniqueness of pair ids.
    pub fn new(name: impl Into<String>, domain: Domain, pairs: Vec<LinkedPair>) -> Result<Self> {
        let mut seen = HashSet::new();
        for p in &pairs {
            p.validate()?;
            if !seen.insert(p.pair_id().to_string()) {
                return Err(Error::validation(format!("duplicate pair id {:?}", p.pair_id())));
            }
        }
        Ok(Self {
            name: name.into(),
            domain,
            pairs,
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn get(&self, pair_id: &str) -> Option<&LinkedPair> {
        self.pairs.iter().find(|p| p.pair_id() == pair_id)
    }

    pub fn n_links(&self) -> usize {
        self.pairs.iter().map(|p| p.links.len()).sum()
    }

    /// Domain named by every pair's `domain` meta entry, else `Other`.
    pub(crate) fn infer_domain(pairs: &[LinkedPair]) -> Domain {
        let mut domains = pairs
            .iter()
            .map(|p| p.pair.meta.get("domain").and_then(|d| Domain::parse(d)));
        match domains.next() {
            Some(Some(first)) if domains.all(|d| d == Some(first)) => first,
            _ => Domain::Other,
        }
    }
}
