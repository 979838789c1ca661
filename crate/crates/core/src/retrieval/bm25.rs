use std::collections::HashMap;

use crate::corpus::{Document, Sentence};
use crate::text::tokenize;

use super::{RetrievalConfig, ScoredRanking};

/// Okapi BM25 over the sentences of one document.
///
/// IDF is `ln((N - n + 0.5) / (n + 0.5) + 1)`, so scores are never negative.
/// Repeated query tokens contribute once per occurrence.
pub struct Bm25Index {
    k1: f64,
    b: f64,
    avgdl: f64,
    doc_len: Vec<usize>,
    postings: HashMap<String, Vec<(usize, usize)>>,
    n_docs: usize,
}

impl Bm25Index {
    pub fn new(doc: &Document, k1: f64, b: f64) -> Self {
        Self::from_tokens(doc.sentences.iter().map(|s| tokenize(&s.text)), k1, b)
    }

    pub fn from_tokens<I, T>(sentences: I, k1: f64, b: f64) -> Self
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[String]>,
    {
        let mut postings: HashMap<String, Vec<(usize, usize)>> = HashMap::new();
        let mut doc_len = Vec::new();
        for (d, toks) in sentences.into_iter().enumerate() {
            let toks = toks.as_ref();
            doc_len.push(toks.len());
            let mut tf: HashMap<&str, usize> = HashMap::new();
            for t in toks {
                *tf.entry(t).or_default() += 1;
            }
            for (t, c) in tf {
                postings.entry(t.to_string()).or_default().push((d, c));
            }
        }
        let n_docs = doc_len.len();
        let total: usize = doc_len.iter().sum();
        let avgdl = if n_docs == 0 { 0.0 } else { total as f64 / n_docs as f64 };
        Self {
            k1,
            b,
            avgdl,
            doc_len,
            postings,
            n_docs,
        }
    }

    pub fn len(&self) -> usize {
        self.n_docs
    }

    pub fn is_empty(&self) -> bool {
        self.n_docs == 0
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.postings.get(term).map_or(0, Vec::len) as f64;
        let big_n = self.n_docs as f64;
        ((big_n - n + 0.5) / (n + 0.5) + 1.0).ln()
    }

    /// Scores of every indexed sentence against the query tokens.
    pub fn score_tokens(&self, query: &[String]) -> Vec<f64> {
        let mut scores = vec![0.0; self.n_docs];
        if self.avgdl == 0.0 {
            return scores;
        }
        for q in query {
            let Some(posting) = self.postings.get(q) else {
                continue;
            };
            let idf = self.idf(q);
            for &(d, tf) in posting {
                let tf = tf as f64;
                let norm = 1.0 - self.b + self.b * self.doc_len[d] as f64 / self.avgdl;
                scores[d] += idf * tf * (self.k1 + 1.0) / (tf + self.k1 * norm);
            }
        }
        scores
    }

    pub fn score_text(&self, query: &str) -> Vec<f64> {
        self.score_tokens(&tokenize(query))
    }
}

/// Ranks the sentences of `target_doc` for one source sentence.
pub fn bm25_score_targets(source_sent: &Sentence, target_doc: &Document, cfg: &RetrievalConfig) -> ScoredRanking {
    let index = Bm25Index::new(target_doc, cfg.k1, cfg.b);
    ScoredRanking::from_scores(source_sent.index, &index.score_text(&source_sent.text))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Role;
    use proptest::prelude::*;

    fn target(texts: &[&str]) -> Document {
        Document::from_texts("t", Role::Target, texts.iter().copied()).unwrap()
    }

    fn rank(query: &str, texts: &[&str]) -> ScoredRanking {
        bm25_score_targets(&Sentence::new(0, query), &target(texts), &RetrievalConfig::default())
    }

    /// Direct evaluation of the formula from token lists, term by term.
    fn brute_force(query: &[String], docs: &[Vec<String>], k1: f64, b: f64) -> Vec<f64> {
        let n_docs = docs.len() as f64;
        let avgdl = docs.iter().map(Vec::len).sum::<usize>() as f64 / n_docs;
        docs.iter()
            .map(|d| {
                let mut s = 0.0;
                for q in query {
                    let df = docs.iter().filter(|x| x.contains(q)).count() as f64;
                    let tf = d.iter().filter(|t| *t == q).count() as f64;
                    if tf == 0.0 {
                        continue;
                    }
                    let idf = f64::ln((n_docs - df + 0.5) / (df + 0.5) + 1.0);
                    s += idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * d.len() as f64 / avgdl));
                }
                s
            })
            .collect()
    }

    #[test]
    fn cat_fixture() {
        let r = rank("cat", &["the cat sat", "dogs bark", "cat videos"]);
        assert_eq!(r.top(3).collect::<Vec<_>>(), vec![2, 0, 1]);
        // idf = ln(1.6), avgdl = 7/3
        let idf = 1.6f64.ln();
        let s2 = idf * 2.2 / (1.0 + 1.2 * (0.25 + 0.75 * 2.0 / (7.0 / 3.0)));
        let s0 = idf * 2.2 / (1.0 + 1.2 * (0.25 + 0.75 * 3.0 / (7.0 / 3.0)));
        assert!((r.ranked[0].1 - s2).abs() < 1e-9);
        assert!((r.ranked[1].1 - s0).abs() < 1e-9);
        assert!((r.ranked[0].1 - 0.4992).abs() < 1e-4);
        assert!((r.ranked[1].1 - 0.4208).abs() < 1e-4);
        assert_eq!(r.ranked[2].1, 0.0);
    }

    #[test]
    fn no_overlap_keeps_document_order() {
        let r = rank("zebra", &["a b", "c", "d e f"]);
        assert_eq!(r.ranked, vec![(0, 0.0), (1, 0.0), (2, 0.0)]);
    }

    #[test]
    fn identical_targets_tie_by_index() {
        let r = rank("red apple", &["green pear", "red apple pie", "red apple pie"]);
        assert_eq!(r.ranked[0].0, 1);
        assert_eq!(r.ranked[1].0, 2);
        assert_eq!(r.ranked[0].1, r.ranked[1].1);
    }

    #[test]
    fn empty_target_sentences_score_zero() {
        let index = Bm25Index::from_tokens(vec![Vec::<String>::new(), Vec::new()], 1.2, 0.75);
        assert_eq!(index.score_tokens(&["a".to_string()]), vec![0.0, 0.0]);
    }

    fn corpus() -> impl Strategy<Value = (Vec<String>, Vec<Vec<String>>)> {
        let word = prop::sample::select(vec!["a", "b", "c", "d", "e", "f"]).prop_map(String::from);
        (
            prop::collection::vec(word.clone(), 0..6),
            prop::collection::vec(prop::collection::vec(word, 1..7), 1..=8),
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn matches_brute_force((query, docs) in corpus(), k1 in 0.1f64..3.0, b in 0.0f64..=1.0) {
            let index = Bm25Index::from_tokens(&docs, k1, b);
            let fast = index.score_tokens(&query);
            let slow = brute_force(&query, &docs, k1, b);
            for (x, y) in fast.iter().zip(&slow) {
                prop_assert!((x - y).abs() < 1e-9, "{x} vs {y}");
                prop_assert!(*x >= 0.0);
            }
        }
    }
}
