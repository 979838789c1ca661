//! Candidate bundles for assisted labeling and agreement analytics.

mod agreement;
mod export;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use chrono::{DateTime, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::corpus::{Document, Domain, LinkingDataset};
use crate::error::{Error, Result};
use crate::predictions::Predictions;
use crate::retrieval::ScoredRanking;
use crate::text::word_count;

pub use agreement::{
    acceptance_breakdown, agreement_between, cohens_kappa, qualification_score, AcceptanceBreakdown, AgreementReport,
    CategoryRates, Rate,
};
pub use export::{
    export_records, import_records, load_bundles, read_bundles, read_records, save_bundles, write_bundles, write_records,
    AnnotationRecord, ExportFilter,
};

/// Which suggestion methods produced a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Provenance {
    rllm: bool,
    retriever: bool,
    random: bool,
}

impl Provenance {
    pub const RANDOM: Self = Self {
        rllm: false,
        retriever: false,
        random: true,
    };

    /// Method-suggested candidate; at least one flag must be set.
    pub fn suggested(rllm: bool, retriever: bool) -> Result<Self> {
        if !rllm && !retriever {
            return Err(Error::validation("provenance needs at least one flag"));
        }
        Ok(Self {
            rllm,
            retriever,
            random: false,
        })
    }

    pub fn rllm(self) -> bool {
        self.rllm
    }

    pub fn retriever(self) -> bool {
        self.retriever
    }

    pub fn random(self) -> bool {
        self.random
    }

    pub fn category(self) -> Category {
        match (self.rllm, self.retriever) {
            _ if self.random => Category::Random,
            (true, true) => Category::Both,
            (true, false) => Category::RllmOnly,
            _ => Category::RetrieverOnly,
        }
    }

    pub fn flags(self) -> Vec<&'static str> {
        [(self.rllm, "rllm"), (self.retriever, "retriever"), (self.random, "random")]
            .into_iter()
            .filter_map(|(on, name)| on.then_some(name))
            .collect()
    }

    pub fn from_flags<S: AsRef<str>>(flags: &[S]) -> Result<Self> {
        let mut p = Self {
            rllm: false,
            retriever: false,
            random: false,
        };
        for f in flags {
            match f.as_ref() {
                "rllm" => p.rllm = true,
                "retriever" => p.retriever = true,
                "random" => p.random = true,
                other => return Err(Error::validation(format!("unknown provenance flag {other:?}"))),
            }
        }
        if p.random && (p.rllm || p.retriever) {
            return Err(Error::validation("random provenance excludes the other flags"));
        }
        if !(p.random || p.rllm || p.retriever) {
            return Err(Error::validation("provenance needs at least one flag"));
        }
        Ok(p)
    }
}

impl Serialize for Provenance {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.flags().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Provenance {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let flags = Vec::<String>::deserialize(d)?;
        Self::from_flags(&flags).map_err(serde::de::Error::custom)
    }
}

/// Mutually exclusive breakdown categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    RllmOnly,
    RetrieverOnly,
    Both,
    Random,
}

impl Category {
    pub const ALL: [Self; 4] = [Self::RllmOnly, Self::RetrieverOnly, Self::Both, Self::Random];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::RllmOnly => "rllm-only",
            Self::RetrieverOnly => "retriever-only",
            Self::Both => "both",
            Self::Random => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub target_idx: usize,
    pub provenance: Provenance,
}

/// Candidates shown for one source sentence, in document order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateBundle {
    pub pair_id: String,
    pub source_idx: usize,
    /// Seed that drew the distractors.
    pub seed: u64,
    pub candidates: Vec<Candidate>,
}

impl CandidateBundle {
    pub fn candidate(&self, target_idx: usize) -> Option<&Candidate> {
        self.candidates.iter().find(|c| c.target_idx == target_idx)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for c in &self.candidates {
            if !seen.insert(c.target_idx) {
                return Err(Error::validation(format!(
                    "bundle {}/{} lists target {} twice",
                    self.pair_id, self.source_idx, c.target_idx
                )));
            }
        }
        Ok(())
    }
}

/// One annotator's judgement on one candidate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub annotator_id: String,
    pub pair_id: String,
    pub source_idx: usize,
    pub target_idx: usize,
    pub accepted: bool,
    pub timestamp: DateTime<Utc>,
}

impl Decision {
    /// `(annotator, pair, source, target)`.
    pub fn key(&self) -> (&str, &str, usize, usize) {
        (&self.annotator_id, &self.pair_id, self.source_idx, self.target_idx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleConfig {
    pub n_rllm: usize,
    pub n_retr: usize,
    pub n_random: usize,
}

impl BundleConfig {
    pub const REVIEWS: Self = Self {
        n_rllm: 3,
        n_retr: 3,
        n_random: 2,
    };
    pub const NEWS: Self = Self {
        n_rllm: 2,
        n_retr: 2,
        n_random: 1,
    };

    pub fn for_domain(domain: Domain) -> Self {
        match domain {
            Domain::Reviews => Self::REVIEWS,
            _ => Self::NEWS,
        }
    }

    pub fn max_size(self) -> usize {
        self.n_rllm + self.n_retr + self.n_random
    }
}

static EXPLICIT_REFERENCE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\b(?:lines?|figures?|figs?|tables?|sections?|sec|eqs?|equations?|appendix|appendices)\b[\s.:#~(-]*(?:\d+[a-z]?(?:\.\d+)*|(?-i:[A-Z](?:\.\d+)*|[IVX]+)\b)",
    )
    .expect("valid pattern")
});

/// Whether a sentence points at a concrete place in the other document,
/// e.g. "Line 12" or "Figure.3".
pub fn has_explicit_reference(text: &str) -> bool {
    EXPLICIT_REFERENCE.is_match(text)
}

/// Source sentences worth annotating: more than three words and no
/// explicit line/figure/table/section reference.
pub fn eligible_sources(doc: &Document) -> Vec<usize> {
    doc.sentences
        .iter()
        .filter(|s| word_count(&s.text) > 3 && !has_explicit_reference(&s.text))
        .map(|s| s.index)
        .collect()
}

/// Per-bundle seed derived from the run seed and the bundle key.
pub fn bundle_seed(seed: u64, pair_id: &str, source_idx: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(pair_id.as_bytes());
    h.update([0u8]);
    h.update((source_idx as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Merges the top lists of both methods and adds seeded random distractors
/// from targets outside both lists.
pub fn assemble_candidates(
    pair_id: &str,
    source_idx: usize,
    rllm_rank: &ScoredRanking,
    retr_rank: &ScoredRanking,
    n_targets: usize,
    cfg: BundleConfig,
    seed: u64,
) -> Result<CandidateBundle> {
    if n_targets < cfg.max_size() {
        return Err(Error::Assembly(format!(
            "pair {pair_id} source {source_idx}: {n_targets} target sentences cannot fill a bundle of {}",
            cfg.max_size()
        )));
    }
    let mut flags: BTreeMap<usize, (bool, bool)> = BTreeMap::new();
    for t in rllm_rank.top(cfg.n_rllm) {
        flags.entry(t).or_default().0 = true;
    }
    for t in retr_rank.top(cfg.n_retr) {
        flags.entry(t).or_default().1 = true;
    }
    if let Some((&t, _)) = flags.range(n_targets..).next() {
        return Err(Error::validation(format!(
            "pair {pair_id}: target {t} outside the {n_targets}-sentence document"
        )));
    }
    let pool: Vec<usize> = (0..n_targets).filter(|t| !flags.contains_key(t)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, pool.len(), cfg.n_random);
    let mut candidates: Vec<Candidate> = flags
        .into_iter()
        .map(|(t, (r, q))| {
            Ok(Candidate {
                target_idx: t,
                provenance: Provenance::suggested(r, q)?,
            })
        })
        .collect::<Result<_>>()?;
    candidates.extend(picks.iter().map(|i| Candidate {
        target_idx: pool[i],
        provenance: Provenance::RANDOM,
    }));
    candidates.sort_by_key(|c| c.target_idx);
    Ok(CandidateBundle {
        pair_id: pair_id.to_string(),
        source_idx,
        seed,
        candidates,
    })
}

/// Bundles for every ranked source of the retriever predictions.
///
/// With a dataset, only eligible sources are kept and target counts come
/// from the documents; otherwise the retriever ranking length is taken as
/// the target count. Sources whose target cannot fill a bundle are skipped
/// with a warning.
pub fn assemble_dataset(
    rllm: &Predictions,
    retr: &Predictions,
    dataset: Option<&LinkingDataset>,
    cfg: BundleConfig,
    seed: u64,
) -> Result<Vec<CandidateBundle>> {
    let empty = |s| ScoredRanking {
        source_idx: s,
        ranked: Vec::new(),
    };
    let mut out = Vec::new();
    for (pair_id, rec) in &retr.records {
        let pair = match dataset {
            Some(ds) => Some(
                ds.get(pair_id)
                    .ok_or_else(|| Error::validation(format!("pair {pair_id} missing from dataset")))?,
            ),
            None => None,
        };
        let eligible: Option<BTreeSet<usize>> = pair.map(|p| eligible_sources(&p.pair.source).into_iter().collect());
        let mut rankings: Vec<&ScoredRanking> = rec.rankings.iter().collect();
        rankings.sort_by_key(|r| r.source_idx);
        for r in rankings {
            if eligible.as_ref().is_some_and(|e| !e.contains(&r.source_idx)) {
                continue;
            }
            let n_targets = pair.map_or(r.len(), |p| p.pair.target.len());
            let fallback = empty(r.source_idx);
            let llm = rllm
                .get(pair_id)
                .and_then(|p| p.ranking(r.source_idx))
                .unwrap_or(&fallback);
            let s = bundle_seed(seed, pair_id, r.source_idx);
            match assemble_candidates(pair_id, r.source_idx, llm, r, n_targets, cfg, s) {
                Ok(b) => out.push(b),
                Err(e @ Error::Assembly(_)) => log::warn!("skipping: {e}"),
                Err(e) => return Err(e),
            }
        }
    }
    Ok(out)
}
