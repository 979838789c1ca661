use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use linkforge_core::corpus::{segment_text, DocRecord, Meta};

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{} line {}", path.display(), i + 1))?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DocBody {
    Sentences { sentences: Vec<String> },
    Text { text: String },
}

/// A document given either pre-split or as running text.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawDoc {
    pub doc_id: String,
    #[serde(flatten)]
    pub body: DocBody,
    #[serde(default)]
    pub meta: Meta,
}

impl RawDoc {
    pub fn into_record(self) -> DocRecord {
        let sentences = match self.body {
            DocBody::Sentences { sentences } => sentences,
            DocBody::Text { text } => segment_text(&text).into_iter().map(|s| s.text).collect(),
        };
        DocRecord {
            doc_id: self.doc_id,
            sentences,
            meta: self.meta,
        }
    }
}
