//! Semi-synthetic linked corpus generation.
//!
//! A natural document is sent to a chat model which writes a new document
//! (a review, or a news article with a different angle) together with a
//! sentence mapping back to the natural one. The mapping becomes the gold
//! link set of the resulting pair.

mod prompts;
mod style;

use std::collections::BTreeMap;

use serde_json::{Map, Value};

use crate::corpus::{Document, DocumentPair, Domain, LinkSet, LinkedPair, Meta, Role};
use crate::error::{Error, Result};
use crate::llm::{complete_structured, extract_json_object, ChatModel, Sampling};
use crate::pool::bounded_map;

pub use prompts::{build_cleaning_prompt, build_generation_prompt, cleaning_template_len};
pub use style::{count_syllables, flesch_reading_ease, style_metrics, HttpSentenceScorer, SentenceScorer, StyleReport};

/// A generated document plus, per generated sentence, the natural sentences
/// it was derived from (`None` when unlinked).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationResult {
    pub generated: Document,
    pub mapping: BTreeMap<usize, Option<Vec<usize>>>,
}

impl GenerationResult {
    pub fn links(&self, pair_id: &str) -> LinkSet {
        LinkSet::from_pairs(
            pair_id,
            self.mapping
                .iter()
                .filter_map(|(&s, ts)| ts.as_ref().map(|ts| (s, ts)))
                .flat_map(|(s, ts)| ts.iter().map(move |&t| (s, t))),
        )
    }

    /// Serializes in the reply shape accepted by [`parse_generation_output`].
    pub fn to_response_json(&self, domain: Domain) -> String {
        let text: Map<String, Value> = self
            .generated
            .sentences
            .iter()
            .map(|s| (s.index.to_string(), Value::String(s.text.clone())))
            .collect();
        let mapping: Map<String, Value> = self
            .mapping
            .iter()
            .map(|(k, v)| {
                let v = match v {
                    Some(ts) => Value::Array(ts.iter().map(|&t| Value::from(t)).collect()),
                    None => Value::Null,
                };
                (k.to_string(), v)
            })
            .collect();
        let mut root = Map::new();
        root.insert(prompts::text_key(domain).into(), Value::Object(text));
        root.insert("mapping".into(), Value::Object(mapping));
        Value::Object(root).to_string()
    }

    pub fn into_pair(self, pair_id: &str, natural: Document) -> LinkedPair {
        let links = self.links(pair_id);
        let mut natural = natural;
        natural.role = Role::Target;
        LinkedPair {
            pair: DocumentPair {
                pair_id: pair_id.to_string(),
                source: self.generated,
                target: natural,
                meta: Meta::new(),
            },
            links,
        }
    }
}

fn index_key(key: &str) -> Option<usize> {
    key.trim().parse().ok()
}

fn as_index(v: &Value) -> Option<usize> {
    match v {
        Value::Number(n) => n.as_u64().map(|n| n as usize),
        Value::String(s) => index_key(s),
        _ => None,
    }
}

/// Parses a generation reply against the natural document it was grounded in.
///
/// The reply must hold one object of index-keyed sentence strings and one
/// `mapping` object. Mapping values are index lists or null.
pub fn parse_generation_output(raw: &str, natural: &Document, doc_id: &str) -> Result<GenerationResult> {
    let root = extract_json_object(raw)?;
    let malformed = |why: String| Error::MalformedOutput(why);

    let (mapping_key, mapping_val) = root
        .iter()
        .find(|(k, v)| k.to_ascii_lowercase().contains("mapping") && (v.is_object() || v.is_null()))
        .ok_or_else(|| malformed("reply has no sentence mapping object".into()))?;
    let text_obj = root
        .iter()
        .filter(|(k, _)| *k != mapping_key)
        .find_map(|(_, v)| match v {
            Value::Object(m) if !m.is_empty() && m.values().all(Value::is_string) => Some(m),
            _ => None,
        })
        .ok_or_else(|| malformed("reply has no index-keyed sentence object".into()))?;

    let mut sentences = BTreeMap::new();
    for (k, v) in text_obj {
        let idx = index_key(k).ok_or_else(|| malformed(format!("sentence key {k:?} is not an index")))?;
        sentences.insert(idx, v.as_str().unwrap_or_default().trim().to_string());
    }
    if let Some((pos, &k)) = sentences.keys().enumerate().find(|&(p, &k)| p != k) {
        return Err(malformed(format!("sentence keys not contiguous: expected {pos}, found {k}")));
    }
    let generated = Document::from_texts(doc_id, Role::Source, sentences.into_values())
        .map_err(|e| malformed(e.to_string()))?;

    let mut mapping = BTreeMap::new();
    if let Value::Object(m) = mapping_val {
        for (k, v) in m {
            let key = index_key(k).ok_or_else(|| malformed(format!("mapping key {k:?} is not an index")))?;
            if key >= generated.len() {
                return Err(Error::validation(format!(
                    "mapping key {key} has no generated sentence ({} generated)",
                    generated.len()
                )));
            }
            let targets = match v {
                Value::Null => None,
                Value::Array(items) => {
                    let mut ts = Vec::with_capacity(items.len());
                    for item in items {
                        let t = as_index(item)
                            .ok_or_else(|| malformed(format!("mapping key {key}: {item} is not an index")))?;
                        if t >= natural.len() {
                            return Err(Error::validation(format!(
                                "mapping key {key}: target index {t} out of range for {} natural sentences",
                                natural.len()
                            )));
                        }
                        ts.push(t);
                    }
                    Some(ts)
                }
                other => {
                    let t = as_index(other)
                        .ok_or_else(|| malformed(format!("mapping key {key}: unexpected value {other}")))?;
                    if t >= natural.len() {
                        return Err(Error::validation(format!(
                            "mapping key {key}: target index {t} out of range for {} natural sentences",
                            natural.len()
                        )));
                    }
                    Some(vec![t])
                }
            };
            mapping.insert(key, targets);
        }
    }
    Ok(GenerationResult { generated, mapping })
}

/// Extracts the `cleaned_article` value from a cleaning reply.
pub fn parse_cleaning_output(raw: &str) -> Result<String> {
    let root = extract_json_object(raw)?;
    match root.get(prompts::CLEANING_KEY) {
        Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.trim().to_string()),
        _ => Err(Error::MalformedOutput(format!(
            "reply lacks a non-empty {:?} string",
            prompts::CLEANING_KEY
        ))),
    }
}

/// Settings shared by cleaning and generation runs.
#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub model: String,
    pub sampling: Sampling,
    pub max_in_flight: usize,
}

impl SynthConfig {
    pub fn new(model: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            sampling: Sampling::default(),
            max_in_flight: 4,
        }
    }
}

/// Generates one linked pair per natural document, in input order.
///
/// Each entry is that document's outcome; a failure does not stop the others.
pub fn generate_pairs(
    model: &dyn ChatModel,
    cfg: &SynthConfig,
    domain: Domain,
    naturals: &[Document],
) -> Vec<Result<LinkedPair>> {
    bounded_map(naturals, cfg.max_in_flight, |natural| {
        let indexed: BTreeMap<usize, String> = natural
            .sentences
            .iter()
            .map(|s| (s.index, s.text.clone()))
            .collect();
        let prompt = build_generation_prompt(domain, &indexed)?;
        let pair_id = format!("synth-{}", natural.doc_id);
        let doc_id = format!("{}-generated", natural.doc_id);
        let out = complete_structured(model, &cfg.model, &prompt, cfg.sampling, |raw| {
            parse_generation_output(raw, natural, &doc_id)
        })?;
        let mut pair = out.value.into_pair(&pair_id, natural.clone());
        pair.pair.meta.insert("domain".into(), domain.to_string());
        pair.pair.meta.insert("origin".into(), "synthetic".into());
        pair.pair.source.meta.insert("generated".into(), "true".into());
        Ok(pair)
    })
}

/// Cleans raw articles, in input order.
pub fn clean_articles(model: &dyn ChatModel, cfg: &SynthConfig, articles: &[String]) -> Vec<Result<String>> {
    bounded_map(articles, cfg.max_in_flight, |article| {
        let prompt = build_cleaning_prompt(article);
        complete_structured(model, &cfg.model, &prompt, cfg.sampling, parse_cleaning_output).map(|a| a.value)
    })
}
