use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Document, DocumentPair, LinkSet, LinkedPair, LinkingDataset, Meta, Role};
use crate::error::{Error, Result};

/// One document as stored on disk: sentences are index-ordered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocRecord {
    pub doc_id: String,
    pub sentences: Vec<String>,
    #[serde(default)]
    pub meta: Meta,
}

impl DocRecord {
    pub fn into_document(self, role: Role) -> Result<Document> {
        let mut doc = Document::from_texts(self.doc_id, role, self.sentences)?;
        doc.meta = self.meta;
        Ok(doc)
    }

    pub fn from_document(doc: &Document) -> Self {
        Self {
            doc_id: doc.doc_id.clone(),
            sentences: doc.sentences.iter().map(|s| s.text.clone()).collect(),
            meta: doc.meta.clone(),
        }
    }
}

/// One line of a dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub pair_id: String,
    pub source: DocRecord,
    pub target: DocRecord,
    #[serde(default)]
    pub links: Vec<[usize; 2]>,
    #[serde(default)]
    pub meta: Meta,
}

impl PairRecord {
    pub fn into_pair(self) -> Result<LinkedPair> {
        let mut links = LinkSet::new(self.pair_id.clone());
        for [s, t] in self.links {
            if !links.links.insert((s, t)) {
                return Err(Error::validation(format!(
                    "pair {:?}: duplicate link ({s}, {t})",
                    self.pair_id
                )));
            }
        }
        let pair = LinkedPair {
            pair: DocumentPair {
                pair_id: self.pair_id,
                source: self.source.into_document(Role::Source)?,
                target: self.target.into_document(Role::Target)?,
                meta: self.meta,
            },
            links,
        };
        pair.validate()?;
        Ok(pair)
    }

    pub fn from_pair(p: &LinkedPair) -> Self {
        Self {
            pair_id: p.pair.pair_id.clone(),
            source: DocRecord::from_document(&p.pair.source),
            target: DocRecord::from_document(&p.pair.target),
            links: p.links.links.iter().map(|&(s, t)| [s, t]).collect(),
            meta: p.pair.meta.clone(),
        }
    }
}

/// Reads line-delimited pair records; blank lines are skipped.
pub fn read_dataset<R: BufRead>(reader: R, name: &str) -> Result<LinkingDataset> {
    let mut pairs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PairRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let pair = record.into_pair().map_err(|e| match e {
            Error::Validation(m) => Error::Validation(format!("line {line_no}: {m}")),
            other => other,
        })?;
        pairs.push(pair);
    }
    let domain = LinkingDataset::infer_domain(&pairs);
    LinkingDataset::new(name, domain, pairs)
}

pub fn parse_dataset(text: &str, name: &str) -> Result<LinkingDataset> {
    read_dataset(text.as_bytes(), name)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<LinkingDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_dataset(BufReader::new(file), &name)
}

pub fn write_dataset<W: Write>(ds: &LinkingDataset, mut writer: W) -> Result<()> {
    for p in &ds.pairs {
        serde_json::to_writer(&mut writer, &PairRecord::from_pair(p))?;
        writer.write_all(b"\n").map_err(|e| Error::io("<dataset>", e))?;
    }
    Ok(())
}

pub fn save_dataset(ds: &LinkingDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_dataset(ds, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Domain;
    use proptest::prelude::*;

    const TWO_PAIRS: &str = r#"{"pair_id":"p1","source":{"doc_id":"s1","sentences":["A one.","A two.","A three."]},"target":{"doc_id":"t1","sentences":["B one.","B two."]},"links":[[0,0],[1,1],[2,1]],"meta":{"domain":"news"}}
{"pair_id":"p2","source":{"doc_id":"s2","sentences":["C one.","C two."]},"target":{"doc_id":"t2","sentences":["D one.","D two.","D three."]},"links":[[0,2],[1,0]],"meta":{"domain":"news"}}
"#;

    #[test]
    fn single_pair_without_links() {
        let line = r#"{"pair_id":"p","source":{"doc_id":"s","sentences":["Hi there."]},"target":{"doc_id":"t","sentences":["Yo."]},"links":[]}"#;
        let ds = parse_dataset(line, "one").unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.n_links(), 0);
        assert_eq!(ds.domain, Domain::Other);
    }

    #[test]
    fn counts_links_over_fixture() {
        let ds = parse_dataset(TWO_PAIRS, "two").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.n_links(), 5);
        assert_eq!(ds.domain, Domain::News);
        assert_eq!(ds.pairs[0].pair_id(), "p1");
        assert_eq!(ds.pairs[1].pair.target.sentences[2].text, "D three.");
    }

    #[test]
    fn missing_target_is_a_parse_error_at_that_line() {
        let text = format!(
            "{}\n{}\n",
            TWO_PAIRS.lines().next().unwrap(),
            r#"{"pair_id":"p3","source":{"doc_id":"s","sentences":["x"]},"links":[]}"#
        );
        match parse_dataset(&text, "bad").unwrap_err() {
            Error::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("target"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dangling_link_is_a_validation_error() {
        let line = r#"{"pair_id":"p","source":{"doc_id":"s","sentences":["x"]},"target":{"doc_id":"t","sentences":["y"]},"links":[[0,4]]}"#;
        let err = parse_dataset(line, "bad").unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.starts_with("line 1")), "{err}");
    }

    #[test]
    fn duplicate_links_are_rejected() {
        let line = r#"{"pair_id":"p","source":{"doc_id":"s","sentences":["x"]},"target":{"doc_id":"t","sentences":["y"]},"links":[[0,0],[0,0]]}"#;
        assert!(matches!(parse_dataset(line, "d"), Err(Error::Validation(_))));
    }

    fn arb_pair(id: usize) -> impl Strategy<Value = PairRecord> {
        (1usize..6, 1usize..6).prop_flat_map(move |(n, m)| {
            (
                proptest::collection::vec("[A-Za-z][a-z ]{0,12}\\.", n),
                proptest::collection::vec("[A-Za-z][a-z ]{0,12}\\.", m),
                proptest::collection::btree_set((0..n, 0..m), 0..6),
            )
                .prop_map(move |(src, tgt, links)| PairRecord {
                    pair_id: format!("p{id}"),
                    source: DocRecord {
                        doc_id: format!("s{id}"),
                        sentences: src,
                        meta: Meta::new(),
                    },
                    target: DocRecord {
                        doc_id: format!("t{id}"),
                        sentences: tgt,
                        meta: Meta::new(),
                    },
                    links: links.into_iter().map(|(s, t)| [s, t]).collect(),
                    meta: Meta::new(),
                })
        })
    }

    proptest! {
        #[test]
        fn serialize_then_load_is_identity(a in arb_pair(0), b in arb_pair(1)) {
            let mut text = String::new();
            for r in [&a, &b] {
                text.push_str(&serde_json::to_string(r).unwrap());
                text.push('\n');
            }
            let ds = parse_dataset(&text, "rt").unwrap();
            let mut out = Vec::new();
            write_dataset(&ds, &mut out).unwrap();
            let again = parse_dataset(std::str::from_utf8(&out).unwrap(), "rt").unwrap();
            prop_assert_eq!(&ds, &again);
            prop_assert_eq!(ds.n_links(), a.links.len() + b.links.len());
        }
    }
}
