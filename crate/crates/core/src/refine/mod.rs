//! LLM classification of retrieved candidates and the retrieval-free variant.

mod prompts;

use std::collections::{BTreeMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{Document, DocumentPair, Domain, LinkSet, LinkingDataset, Sentence};
use crate::error::{Error, Result};
use crate::llm::{complete_structured, extract_json_object, Attempted, ChatModel, ChatRequest, Prompt, Sampling};
use crate::pool::bounded_map;
use crate::predictions::{PredictionKind, PredictionRecord, Predictions};
use crate::retrieval::ScoredRanking;

pub use prompts::{build_listwise_prompt, build_llm_only_prompt, build_pairwise_prompt, ExamplePair, Guidance, PromptMode};

/// Candidates passed to the model per source unless overridden.
pub fn default_k(domain: Domain) -> usize {
    match domain {
        Domain::Reviews => 20,
        Domain::News | Domain::Other => 10,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionForm {
    /// `{"related": bool}` for a single presented target.
    Pairwise,
    /// `{"<target id>": bool, ...}` for every presented target.
    Listwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefineForm {
    Pairwise,
    Listwise,
    LlmOnly,
}

impl RefineForm {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pairwise => "pairwise",
            Self::Listwise => "listwise",
            Self::LlmOnly => "llm-only",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::Pairwise, Self::Listwise, Self::LlmOnly]
            .into_iter()
            .find(|f| f.as_str() == s)
    }
}

/// Model decisions for one source sentence.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmDecisionSet {
    pub source_idx: usize,
    pub decisions: BTreeMap<usize, bool>,
    /// Presented ids the reply left out; recorded as `false`.
    #[serde(default)]
    pub defaulted: Vec<usize>,
    /// Reply keys that were not presented.
    #[serde(default)]
    pub extraneous: Vec<String>,
}

impl LlmDecisionSet {
    pub fn accepted(&self) -> impl Iterator<Item = usize> + '_ {
        self.decisions.iter().filter(|(_, &v)| v).map(|(&t, _)| t)
    }

    fn merge(&mut self, other: LlmDecisionSet) {
        self.decisions.extend(other.decisions);
        self.defaulted.extend(other.defaulted);
        self.extraneous.extend(other.extraneous);
    }
}

fn as_bool(v: &Value) -> Option<bool> {
    match v {
        Value::Bool(b) => Some(*b),
        Value::String(s) if s.eq_ignore_ascii_case("true") => Some(true),
        Value::String(s) if s.eq_ignore_ascii_case("false") => Some(false),
        _ => None,
    }
}

/// Maps a model reply onto decisions for exactly the presented targets.
///
/// Listwise replies may omit ids (defaulted to `false`) or add unknown ones
/// (ignored); both are logged.
pub fn parse_decision_response(
    raw: &str,
    source_idx: usize,
    presented: &[usize],
    form: DecisionForm,
) -> Result<LlmDecisionSet> {
    let mut seen = HashSet::new();
    if let Some(dup) = presented.iter().find(|t| !seen.insert(**t)) {
        return Err(Error::validation(format!("target {dup} presented twice")));
    }
    let obj = extract_json_object(raw)?;
    let mut out = LlmDecisionSet {
        source_idx,
        ..Default::default()
    };
    match form {
        DecisionForm::Pairwise => {
            let &[target] = presented else {
                return Err(Error::Contract(format!(
                    "pairwise decisions cover one target, {} presented",
                    presented.len()
                )));
            };
            let related = obj
                .get("related")
                .and_then(as_bool)
                .ok_or_else(|| Error::MalformedOutput(format!("no boolean \"related\" field in {raw:?}")))?;
            out.decisions.insert(target, related);
        }
        DecisionForm::Listwise => {
            for (key, value) in &obj {
                match key.trim().parse::<usize>() {
                    Ok(t) if seen.contains(&t) => {
                        let b = as_bool(value).ok_or_else(|| {
                            Error::MalformedOutput(format!("decision for {t} is not a boolean: {value}"))
                        })?;
                        out.decisions.insert(t, b);
                    }
                    _ => out.extraneous.push(key.clone()),
                }
            }
            for &t in presented {
                if let std::collections::btree_map::Entry::Vacant(e) = out.decisions.entry(t) {
                    e.insert(false);
                    out.defaulted.push(t);
                }
            }
            if !out.defaulted.is_empty() {
                log::warn!("source {source_idx}: no decision for {:?}, treated as not linked", out.defaulted);
            }
            if !out.extraneous.is_empty() {
                log::warn!("source {source_idx}: ignoring unrequested ids {:?}", out.extraneous);
            }
        }
    }
    Ok(out)
}

/// Keeps the top-`k` targets the model accepted.
pub fn refine_ranking(r: &ScoredRanking, k: usize, d: &LlmDecisionSet, pair_id: &str) -> Result<LinkSet> {
    let mut out = LinkSet::new(pair_id);
    for t in r.top(k) {
        match d.decisions.get(&t) {
            Some(true) => {
                out.links.insert((r.source_idx, t));
            }
            Some(false) => {}
            None => {
                return Err(Error::Contract(format!(
                    "no decision for target {t} of source {}",
                    r.source_idx
                )))
            }
        }
    }
    Ok(out)
}

/// Everything needed to ask the model about one source sentence.
#[derive(Clone, Copy)]
pub struct Classifier<'a> {
    pub chat: &'a dyn ChatModel,
    pub model: &'a str,
    pub sampling: Sampling,
    pub mode: PromptMode,
    pub guidance: &'a Guidance,
    /// Prompts longer than this are rejected before sending.
    pub max_prompt_chars: Option<usize>,
}

impl Classifier<'_> {
    fn ask(&self, prompt: Prompt, source_idx: usize, presented: &[usize], form: DecisionForm) -> Result<Attempted<LlmDecisionSet>> {
        if let Some(limit) = self.max_prompt_chars {
            let len = prompt.to_string().chars().count();
            if len > limit {
                return Err(Error::Config(format!("prompt of {len} chars exceeds the {limit}-char limit")));
            }
        }
        complete_structured(self.chat, self.model, &prompt, self.sampling, |raw| {
            parse_decision_response(raw, source_idx, presented, form)
        })
    }

    pub fn classify_pairwise(&self, doc_a: &Document, doc_b: &Document, src: &Sentence, tgt: &Sentence) -> Result<Attempted<LlmDecisionSet>> {
        let prompt = build_pairwise_prompt(doc_a, doc_b, src, tgt, self.mode, self.guidance)?;
        self.ask(prompt, src.index, &[tgt.index], DecisionForm::Pairwise)
    }

    pub fn classify_listwise(&self, doc_a: &Document, doc_b: &Document, src: &Sentence, candidates: &[usize]) -> Result<Attempted<LlmDecisionSet>> {
        let rendered = candidates
            .iter()
            .map(|&t| {
                doc_b
                    .sentence(t)
                    .map(|s| (t, s.text.clone()))
                    .ok_or_else(|| Error::validation(format!("candidate {t} outside document {:?}", doc_b.doc_id)))
            })
            .collect::<Result<Vec<_>>>()?;
        let prompt = build_listwise_prompt(doc_a, doc_b, src, &rendered, self.mode, self.guidance)?;
        self.ask(prompt, src.index, candidates, DecisionForm::Listwise)
    }

    /// Classifies every sentence of `doc_b` without retrieval.
    pub fn classify_all(&self, doc_a: &Document, doc_b: &Document, src: &Sentence) -> Result<Attempted<LlmDecisionSet>> {
        let prompt = build_llm_only_prompt(doc_a, doc_b, src, self.mode, self.guidance)?;
        let all: Vec<usize> = (0..doc_b.len()).collect();
        self.ask(prompt, src.index, &all, DecisionForm::Listwise)
    }
}

/// Retrieval-free linking of one source sentence against the whole target.
pub fn llm_only_classify(c: &Classifier<'_>, pair: &DocumentPair, src: &Sentence) -> Result<LinkSet> {
    let d = c.classify_all(&pair.source, &pair.target, src)?.value;
    Ok(LinkSet::from_pairs(&pair.pair_id, d.accepted().map(|t| (src.index, t))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefineConfig {
    pub form: RefineForm,
    pub k: usize,
    pub max_in_flight: usize,
}

/// Per-source outcome kept alongside the predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceAudit {
    pub pair_id: String,
    pub source_idx: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub defaulted: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extraneous: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RefineOutput {
    pub records: Vec<PredictionRecord>,
    pub audit: Vec<SourceAudit>,
    /// Model requests issued, retries included.
    pub requests: usize,
}

impl RefineOutput {
    pub fn failed_sources(&self) -> usize {
        self.audit.iter().filter(|a| a.error.is_some()).count()
    }
}

struct Counting<'a> {
    inner: &'a dyn ChatModel,
    calls: AtomicUsize,
}

impl ChatModel for Counting<'_> {
    fn complete(&self, request: &ChatRequest) -> Result<String> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.complete(request)
    }
}

struct Job<'a> {
    slot: usize,
    pair: &'a DocumentPair,
    source: usize,
    presented: Vec<usize>,
}

struct Slot<'a> {
    pair_id: &'a str,
    ranking: Option<&'a ScoredRanking>,
    source: usize,
}

fn input_ranking<'a>(rankings: Option<&'a Predictions>, pair_id: &str) -> Result<&'a PredictionRecord> {
    let rec = rankings
        .and_then(|p| p.get(pair_id))
        .ok_or_else(|| Error::validation(format!("no rankings for pair {pair_id}")))?;
    if rec.kind != PredictionKind::Ranked {
        return Err(Error::Config(format!("pair {pair_id}: refine needs ranked predictions")));
    }
    Ok(rec)
}

/// Runs the configured classification over a dataset.
///
/// Sources are processed concurrently up to `max_in_flight`. A source whose
/// reply stays malformed after the retry gets no links and an audit entry;
/// it does not abort the run. Output is ordered by pair, then source.
pub fn refine_dataset(
    classifier: &Classifier<'_>,
    cfg: &RefineConfig,
    ds: &LinkingDataset,
    rankings: Option<&Predictions>,
) -> Result<RefineOutput> {
    if cfg.k == 0 && cfg.form != RefineForm::LlmOnly {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let counting = Counting {
        inner: classifier.chat,
        calls: AtomicUsize::new(0),
    };
    let c = Classifier {
        chat: &counting,
        ..*classifier
    };

    let mut slots: Vec<Slot> = Vec::new();
    let mut jobs: Vec<Job> = Vec::new();
    let mut methods: BTreeMap<&str, String> = BTreeMap::new();
    for lp in &ds.pairs {
        let pair = &lp.pair;
        if cfg.form == RefineForm::LlmOnly {
            methods.insert(&pair.pair_id, format!("llm-only-{}", c.mode));
            for s in &pair.source.sentences {
                jobs.push(Job {
                    slot: slots.len(),
                    pair,
                    source: s.index,
                    presented: (0..pair.target.len()).collect(),
                });
                slots.push(Slot {
                    pair_id: &pair.pair_id,
                    ranking: None,
                    source: s.index,
                });
            }
            continue;
        }
        let rec = input_ranking(rankings, &pair.pair_id)?;
        rec.validate(Some(ds))?;
        methods.insert(&pair.pair_id, format!("{}+llm-{}-{}", rec.method, cfg.form.as_str(), c.mode));
        for r in &rec.rankings {
            let top: Vec<usize> = r.top(cfg.k).collect();
            match cfg.form {
                RefineForm::Listwise if !top.is_empty() => jobs.push(Job {
                    slot: slots.len(),
                    pair,
                    source: r.source_idx,
                    presented: top,
                }),
                RefineForm::Pairwise => jobs.extend(top.into_iter().map(|t| Job {
                    slot: slots.len(),
                    pair,
                    source: r.source_idx,
                    presented: vec![t],
                })),
                _ => {}
            }
            slots.push(Slot {
                pair_id: &pair.pair_id,
                ranking: Some(r),
                source: r.source_idx,
            });
        }
    }

    let results = bounded_map(&jobs, cfg.max_in_flight, |job| {
        let pair = job.pair;
        let src = pair
            .source
            .sentence(job.source)
            .ok_or_else(|| Error::validation(format!("source {} outside pair {}", job.source, pair.pair_id)))?;
        let outcome = match cfg.form {
            RefineForm::Pairwise => {
                let tgt = pair
                    .target
                    .sentence(job.presented[0])
                    .ok_or_else(|| Error::validation(format!("target {} outside pair {}", job.presented[0], pair.pair_id)))?;
                c.classify_pairwise(&pair.source, &pair.target, src, tgt)
            }
            RefineForm::Listwise => c.classify_listwise(&pair.source, &pair.target, src, &job.presented),
            RefineForm::LlmOnly => c.classify_all(&pair.source, &pair.target, src),
        };
        outcome.map(|a| a.value)
    });

    let mut merged: Vec<Result<LlmDecisionSet>> = slots
        .iter()
        .map(|s| {
            Ok(LlmDecisionSet {
                source_idx: s.source,
                ..Default::default()
            })
        })
        .collect();
    for (job, res) in jobs.iter().zip(results) {
        let entry = &mut merged[job.slot];
        match (entry.as_mut(), res) {
            (Ok(acc), Ok(d)) => acc.merge(d),
            (Ok(_), Err(e)) => *entry = Err(e),
            (Err(_), _) => {}
        }
    }

    let mut records: Vec<PredictionRecord> = Vec::new();
    let mut audit = Vec::new();
    for (slot, res) in slots.iter().zip(merged) {
        if records.last().is_none_or(|r| r.pair_id != slot.pair_id) {
            records.push(PredictionRecord {
                pair_id: slot.pair_id.to_string(),
                method: methods[slot.pair_id].clone(),
                kind: PredictionKind::Links,
                rankings: Vec::new(),
            });
        }
        let ranked = match (&res, slot.ranking) {
            (Ok(d), Some(r)) => {
                let keep = refine_ranking(r, cfg.k, d, slot.pair_id)?;
                r.ranked
                    .iter()
                    .filter(|(t, _)| keep.contains(slot.source, *t))
                    .copied()
                    .collect()
            }
            (Ok(d), None) => d.accepted().map(|t| (t, 1.0)).collect(),
            (Err(_), _) => Vec::new(),
        };
        records.last_mut().expect("pushed above").rankings.push(ScoredRanking {
            source_idx: slot.source,
            ranked,
        });
        let entry = match res {
            Ok(d) if d.defaulted.is_empty() && d.extraneous.is_empty() => None,
            Ok(d) => Some(SourceAudit {
                pair_id: slot.pair_id.to_string(),
                source_idx: slot.source,
                error: None,
                defaulted: d.defaulted,
                extraneous: d.extraneous,
            }),
            Err(e) => {
                log::error!("pair {} source {}: {e}", slot.pair_id, slot.source);
                Some(SourceAudit {
                    pair_id: slot.pair_id.to_string(),
                    source_idx: slot.source,
                    error: Some(e.to_string()),
                    defaulted: Vec::new(),
                    extraneous: Vec::new(),
                })
            }
        };
        audit.extend(entry);
    }
    Ok(RefineOutput {
        records,
        audit,
        requests: counting.calls.load(Ordering::Relaxed),
    })
}
