//! Conversions of externally annotated corpora into linking datasets.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{DocRecord, DocumentPair, Domain, LinkSet, LinkedPair, LinkingDataset, Meta, Role};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MentionSide {
    Source,
    Target,
}

/// One event mention: which document, which sentence, which coreference cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EcbMention {
    pub side: MentionSide,
    pub sentence: usize,
    pub cluster: String,
    /// Mention sits in a headline or title sentence.
    #[serde(default)]
    pub title: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EcbRecord {
    pub pair_id: String,
    pub source: DocRecord,
    pub target: DocRecord,
    pub mentions: Vec<EcbMention>,
    #[serde(default)]
    pub meta: Meta,
}

/// Links two sentences iff they hold mentions of the same event cluster.
///
/// Links whose every derivation involves a title mention are kept and listed
/// under the pair's `title_links` meta entry.
pub fn convert_ecb(records: &[EcbRecord], name: &str) -> Result<LinkingDataset> {
    let mut pairs = Vec::with_capacity(records.len());
    for rec in records {
        let source = rec.source.clone().into_document(Role::Source)?;
        let target = rec.target.clone().into_document(Role::Target)?;

        // cluster -> side -> sentence -> all mentions in that sentence are titles
        let mut clusters: BTreeMap<&str, BTreeMap<MentionSide, BTreeMap<usize, bool>>> = BTreeMap::new();
        for m in &rec.mentions {
            let limit = match m.side {
                MentionSide::Source => source.len(),
                MentionSide::Target => target.len(),
            };
            if m.sentence >= limit {
                return Err(Error::validation(format!(
                    "pair {:?}: cluster {:?} references {:?} sentence {} of {limit}",
                    rec.pair_id, m.cluster, m.side, m.sentence
                )));
            }
            let all_title = clusters
                .entry(m.cluster.as_str())
                .or_default()
                .entry(m.side)
                .or_default()
                .entry(m.sentence)
                .or_insert(true);
            *all_title &= m.title;
        }

        let mut derived: BTreeMap<(usize, usize), bool> = BTreeMap::new();
        for sides in clusters.values() {
            let (Some(src), Some(tgt)) = (sides.get(&MentionSide::Source), sides.get(&MentionSide::Target)) else {
                continue;
            };
            for (&s, &s_title) in src {
                for (&t, &t_title) in tgt {
                    let from_title = s_title || t_title;
                    let only_title = derived.entry((s, t)).or_insert(true);
                    *only_title &= from_title;
                }
            }
        }

        let mut meta = rec.meta.clone();
        meta.entry("domain".into()).or_insert_with(|| Domain::News.to_string());
        meta.insert("origin".into(), "ecb".into());
        let title_links: Vec<[usize; 2]> = derived
            .iter()
            .filter(|(_, &only_title)| only_title)
            .map(|(&(s, t), _)| [s, t])
            .collect();
        if !title_links.is_empty() {
            meta.insert("title_links".into(), serde_json::to_string(&title_links)?);
        }

        pairs.push(LinkedPair {
            links: LinkSet::from_pairs(rec.pair_id.clone(), derived.into_keys()),
            pair: DocumentPair {
                pair_id: rec.pair_id.clone(),
                source,
                target,
                meta,
            },
        });
    }
    LinkingDataset::new(name, Domain::News, pairs)
}

/// A candidate link judged independently by several annotators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct F1000Candidate {
    pub source_idx: usize,
    pub target_idx: usize,
    pub labels: BTreeMap<String, bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct F1000Record {
    pub pair_id: String,
    pub source: DocRecord,
    pub target: DocRecord,
    pub candidates: Vec<F1000Candidate>,
    #[serde(default)]
    pub meta: Meta,
}

/// Keeps only candidate links every annotator labeled positive.
///
/// A candidate judged by fewer than two annotators is rejected.
pub fn convert_f1000(records: &[F1000Record], name: &str) -> Result<LinkingDataset> {
    let mut pairs = Vec::with_capacity(records.len());
    for rec in records {
        let mut kept = BTreeSet::new();
        for c in &rec.candidates {
            if c.labels.len() < 2 {
                return Err(Error::validation(format!(
                    "pair {:?}: candidate ({}, {}) has {} annotator label(s), need two",
                    rec.pair_id,
                    c.source_idx,
                    c.target_idx,
                    c.labels.len()
                )));
            }
            if c.labels.values().all(|&v| v) {
                kept.insert((c.source_idx, c.target_idx));
            }
        }
        let mut meta = rec.meta.clone();
        meta.entry("domain".into()).or_insert_with(|| Domain::Reviews.to_string());
        meta.insert("origin".into(), "f1000".into());
        pairs.push(LinkedPair {
            pair: DocumentPair {
                pair_id: rec.pair_id.clone(),
                source: rec.source.clone().into_document(Role::Source)?,
                target: rec.target.clone().into_document(Role::Target)?,
                meta,
            },
            links: LinkSet::from_pairs(rec.pair_id.clone(), kept),
        });
    }
    LinkingDataset::new(name, Domain::Reviews, pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc(id: &str, n: usize) -> DocRecord {
        DocRecord {
            doc_id: id.into(),
            sentences: (0..n).map(|i| format!("Sentence {i}.")).collect(),
            meta: Meta::new(),
        }
    }

    fn mention(side: MentionSide, sentence: usize, cluster: &str) -> EcbMention {
        EcbMention {
            side,
            sentence,
            cluster: cluster.into(),
            title: false,
        }
    }

    fn ecb(mentions: Vec<EcbMention>) -> EcbRecord {
        EcbRecord {
            pair_id: "p".into(),
            source: doc("a", 4),
            target: doc("b", 5),
            mentions,
            meta: Meta::new(),
        }
    }

    #[test]
    fn shared_cluster_links_its_sentences() {
        let rec = ecb(vec![mention(MentionSide::Source, 0, "c1"), mention(MentionSide::Target, 3, "c1")]);
        let ds = convert_ecb(&[rec], "ecb").unwrap();
        assert_eq!(ds.pairs[0].links.links, BTreeSet::from([(0, 3)]));
        assert_eq!(ds.domain, Domain::News);
    }

    #[test]
    fn disjoint_clusters_give_no_links() {
        let rec = ecb(vec![mention(MentionSide::Source, 0, "c1"), mention(MentionSide::Target, 3, "c2")]);
        assert!(convert_ecb(&[rec], "ecb").unwrap().pairs[0].links.is_empty());
    }

    #[test]
    fn unknown_sentence_is_rejected() {
        let rec = ecb(vec![mention(MentionSide::Target, 5, "c1")]);
        assert!(matches!(convert_ecb(&[rec], "ecb"), Err(Error::Validation(_))));
    }

    #[test]
    fn title_only_links_are_tagged() {
        let mut title = mention(MentionSide::Source, 0, "c1");
        title.title = true;
        let rec = ecb(vec![
            title,
            mention(MentionSide::Target, 1, "c1"),
            mention(MentionSide::Source, 2, "c1"),
            // (0,4) also derives from a non-title mention pair
            mention(MentionSide::Source, 0, "c2"),
            mention(MentionSide::Target, 4, "c2"),
            mention(MentionSide::Target, 4, "c1"),
        ]);
        let ds = convert_ecb(&[rec], "ecb").unwrap();
        let p = &ds.pairs[0];
        assert_eq!(p.links.links, BTreeSet::from([(0, 1), (0, 4), (2, 1), (2, 4)]));
        assert_eq!(p.pair.meta["title_links"], "[[0,1]]");
    }

    fn f1000(labels: &[(&str, bool)]) -> F1000Record {
        F1000Record {
            pair_id: "r".into(),
            source: doc("rev", 3),
            target: doc("paper", 3),
            candidates: vec![F1000Candidate {
                source_idx: 1,
                target_idx: 2,
                labels: labels.iter().map(|&(a, v)| (a.to_string(), v)).collect(),
            }],
            meta: Meta::new(),
        }
    }

    #[test]
    fn f1000_keeps_only_unanimous_positive() {
        let kept = convert_f1000(&[f1000(&[("a", true), ("b", true)])], "f").unwrap();
        assert_eq!(kept.n_links(), 1);
        let dropped = convert_f1000(&[f1000(&[("a", true), ("b", false)])], "f").unwrap();
        assert_eq!(dropped.n_links(), 0);
        assert_eq!(kept.domain, Domain::Reviews);
    }

    #[test]
    fn f1000_single_annotator_is_rejected() {
        assert!(matches!(
            convert_f1000(&[f1000(&[("a", true)])], "f"),
            Err(Error::Validation(_))
        ));
    }

    proptest! {
        #[test]
        fn ecb_links_ignore_mention_order(
            raw in proptest::collection::vec((any::<bool>(), 0usize..4, 0usize..3), 0..14),
            seed in any::<u64>(),
        ) {
            let mentions: Vec<EcbMention> = raw
                .iter()
                .map(|&(src, s, c)| mention(
                    if src { MentionSide::Source } else { MentionSide::Target },
                    s,
                    &format!("c{c}"),
                ))
                .collect();
            let mut shuffled = mentions.clone();
            use rand::{seq::SliceRandom, SeedableRng};
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = convert_ecb(&[ecb(mentions)], "x").unwrap();
            let b = convert_ecb(&[ecb(shuffled)], "x").unwrap();
            prop_assert_eq!(&a.pairs[0].links, &b.pairs[0].links);
        }

        #[test]
        fn f1000_output_is_unanimous_and_bounded(
            labels in proptest::collection::vec((0usize..3, 0usize..3, any::<bool>(), any::<bool>()), 0..12)
        ) {
            let candidates: Vec<F1000Candidate> = labels
                .iter()
                .map(|&(s, t, a, b)| F1000Candidate {
                    source_idx: s,
                    target_idx: t,
                    labels: BTreeMap::from([("a".to_string(), a), ("b".to_string(), b)]),
                })
                .collect();
            let positives = labels.iter().filter(|l| l.2 || l.3).count();
            let rec = F1000Record {
                pair_id: "r".into(),
                source: doc("s", 3),
                target: doc("t", 3),
                candidates: candidates.clone(),
                meta: Meta::new(),
            };
            let ds = convert_f1000(&[rec], "f").unwrap();
            prop_assert!(ds.n_links() <= positives);
            for &(s, t) in &ds.pairs[0].links.links {
                prop_assert!(candidates
                    .iter()
                    .any(|c| c.source_idx == s && c.target_idx == t && c.labels.values().all(|&v| v)));
            }
        }
    }
}
