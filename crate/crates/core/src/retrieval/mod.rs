//! Per-source-sentence ranking of target sentences and top-k thresholding.

mod bm25;
mod dense;

use std::cmp::Ordering;
use std::collections::HashSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::corpus::{DocumentPair, LinkSet, LinkingDataset};
use crate::error::{Error, Result};
use crate::predictions::{PredictionKind, PredictionRecord};

pub use bm25::{bm25_score_targets, Bm25Index};
pub use dense::{embed_batch, rank_by_cosine, EmbedOptions, Embedder, EmbeddingCache, HttpEmbedder};

/// Target sentences ordered by descending score for one source sentence.
///
/// Ties are broken by ascending target index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRanking {
    pub source_idx: usize,
    pub ranked: Vec<(usize, f64)>,
}

impl ScoredRanking {
    /// Ranks `scores[t]` for every target `t`.
    pub fn from_scores(source_idx: usize, scores: &[f64]) -> Self {
        Self::from_scores_by(source_idx, scores, |a, b| b.total_cmp(a))
    }

    pub(crate) fn from_scores_by(
        source_idx: usize,
        scores: &[f64],
        desc: impl Fn(&f64, &f64) -> Ordering,
    ) -> Self {
        let mut ranked: Vec<(usize, f64)> = scores.iter().copied().enumerate().collect();
        ranked.sort_by(|a, b| desc(&a.1, &b.1).then(a.0.cmp(&b.0)));
        Self { source_idx, ranked }
    }

    /// Checks uniqueness and score monotonicity of an externally built ranking.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.ranked.len());
        for w in self.ranked.windows(2) {
            if w[1].1 > w[0].1 {
                return Err(Error::validation(format!(
                    "ranking for source {} increases from {} to {}",
                    self.source_idx, w[0].1, w[1].1
                )));
            }
        }
        for &(t, s) in &self.ranked {
            if !s.is_finite() {
                return Err(Error::validation(format!("non-finite score for target {t}")));
            }
            if !seen.insert(t) {
                return Err(Error::validation(format!(
                    "ranking for source {} lists target {t} twice",
                    self.source_idx
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ranked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranked.is_empty()
    }

    /// Target indices of the first `min(k, len)` entries.
    pub fn top(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.ranked.iter().take(k).map(|&(t, _)| t)
    }

    pub fn truncate(&mut self, k: usize) {
        self.ranked.truncate(k);
    }
}

/// The first `k` ranked targets become links. `k = 0` yields no links.
pub fn threshold_topk(r: &ScoredRanking, k: usize, pair_id: &str) -> LinkSet {
    LinkSet::from_pairs(pair_id, r.top(k).map(|t| (r.source_idx, t)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetrievalMethod {
    Bm25,
    Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub method: RetrievalMethod,
    pub k1: f64,
    pub b: f64,
    pub embed_model: String,
    pub cache_dir: Option<PathBuf>,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            method: RetrievalMethod::Bm25,
            k1: 1.2,
            b: 0.75,
            embed_model: String::new(),
            cache_dir: None,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.method == RetrievalMethod::Bm25 {
            if self.k1.is_nan() || self.k1 <= 0.0 {
                return Err(Error::Config(format!("k1 must be positive, got {}", self.k1)));
            }
            if !(0.0..=1.0).contains(&self.b) {
                return Err(Error::Config(format!("b must lie in [0, 1], got {}", self.b)));
            }
        }
        Ok(())
    }
}

/// Produces one ranking per source sentence of a pair.
pub trait PairRanker: Sync {
    fn name(&self) -> &str;
    fn rank_pair(&self, pair: &DocumentPair) -> Result<Vec<ScoredRanking>>;
}

pub struct Bm25Ranker {
    pub k1: f64,
    pub b: f64,
}

impl PairRanker for Bm25Ranker {
    fn name(&self) -> &str {
        "bm25"
    }

    fn rank_pair(&self, pair: &DocumentPair) -> Result<Vec<ScoredRanking>> {
        let index = Bm25Index::new(&pair.target, self.k1, self.b);
        Ok(pair
            .source
            .sentences
            .iter()
            .map(|s| ScoredRanking::from_scores(s.index, &index.score_text(&s.text)))
            .collect())
    }
}

/// Cosine ranking over embeddings fetched through a cache.
pub struct DenseRanker<'a> {
    pub embedder: &'a dyn Embedder,
    pub cache: &'a EmbeddingCache,
    pub options: EmbedOptions,
}

impl PairRanker for DenseRanker<'_> {
    fn name(&self) -> &str {
        self.embedder.model()
    }

    fn rank_pair(&self, pair: &DocumentPair) -> Result<Vec<ScoredRanking>> {
        let texts: Vec<String> = pair
            .source
            .sentences
            .iter()
            .chain(&pair.target.sentences)
            .map(|s| s.text.clone())
            .collect();
        let vecs = embed_batch(&texts, self.embedder, self.cache, &self.options)?;
        let (src, tgt) = vecs.split_at(pair.source.len());
        src.iter()
            .enumerate()
            .map(|(i, u)| rank_by_cosine(i, u, tgt))
            .collect()
    }
}

/// Ranks every pair of a dataset, keeping at most `keep` entries per ranking.
pub fn retrieve_dataset(ds: &LinkingDataset, ranker: &dyn PairRanker, keep: Option<usize>) -> Result<Vec<PredictionRecord>> {
    ds.pairs
        .iter()
        .map(|p| {
            let mut rankings = ranker.rank_pair(&p.pair)?;
            if let Some(k) = keep {
                rankings.iter_mut().for_each(|r| r.truncate(k));
            }
            Ok(PredictionRecord {
                pair_id: p.pair_id().to_string(),
                method: ranker.name().to_string(),
                kind: PredictionKind::Ranked,
                rankings,
            })
        })
        .collect()
}
