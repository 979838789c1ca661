use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pool::bounded_map;

use super::ScoredRanking;

/// Cosine scores are rounded to this many decimals so that rankings do not
/// depend on last-bit rounding noise.
const COSINE_DECIMALS: i32 = 9;

/// A sentence embedding service.
pub trait Embedder: Send + Sync {
    fn model(&self) -> &str;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;
}

/// `POST {model, input:[...]}` answered by `{data:[{index, embedding}]}`.
pub struct HttpEmbedder {
    url: String,
    model: String,
    client: reqwest::blocking::Client,
    retries: usize,
    requests: AtomicUsize,
}

impl HttpEmbedder {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(Self {
            url: url.into(),
            model: model.into(),
            client,
            retries: 2,
            requests: AtomicUsize::new(0),
        })
    }

    pub fn with_retries(mut self, retries: usize) -> Self {
        self.retries = retries;
        self
    }

    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::Relaxed)
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    index: usize,
    embedding: Vec<f64>,
}

impl Embedder for HttpEmbedder {
    fn model(&self) -> &str {
        &self.model
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let body = serde_json::json!({ "model": self.model, "input": texts });
        let mut last = String::new();
        for attempt in 0..=self.retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(200 * attempt as u64));
            }
            self.requests.fetch_add(1, Ordering::Relaxed);
            let resp = match self.client.post(&self.url).json(&body).send() {
                Ok(r) => r,
                Err(e) => {
                    last = e.to_string();
                    continue;
                }
            };
            let status = resp.status();
            if status.is_server_error() {
                last = format!("{} returned {status}", self.url);
                continue;
            }
            if !status.is_success() {
                return Err(Error::Transport(format!("{} returned {status}", self.url)));
            }
            let parsed: EmbeddingResponse = resp
                .json()
                .map_err(|e| Error::Transport(format!("bad embedding response body: {e}")))?;
            return align(parsed.data, texts.len());
        }
        Err(Error::Transport(format!(
            "embedding request failed after {} attempts: {last}",
            self.retries + 1
        )))
    }
}

fn align(items: Vec<EmbeddingItem>, n: usize) -> Result<Vec<Vec<f64>>> {
    if items.len() != n {
        return Err(Error::Integrity(format!("asked for {n} embeddings, got {}", items.len())));
    }
    let mut out: Vec<Option<Vec<f64>>> = vec![None; n];
    for item in items {
        let slot = out
            .get_mut(item.index)
            .ok_or_else(|| Error::Integrity(format!("embedding index {} out of range", item.index)))?;
        if slot.replace(item.embedding).is_some() {
            return Err(Error::Integrity(format!("embedding index {} repeated", item.index)));
        }
    }
    Ok(out.into_iter().map(|v| v.expect("every index filled")).collect())
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    key: String,
    embedding: Vec<f64>,
}

/// Embeddings keyed by a hash of (model, text), optionally persisted as an
/// append-only JSONL file.
pub struct EmbeddingCache {
    entries: RwLock<HashMap<String, Arc<Vec<f64>>>>,
    file: Option<Mutex<BufWriter<File>>>,
    path: Option<PathBuf>,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        Self {
            entries: RwLock::new(HashMap::new()),
            file: None,
            path: None,
        }
    }

    /// Opens (or creates) the cache stored under `dir`.
    pub fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("embeddings.jsonl");
        let mut entries = HashMap::new();
        if path.exists() {
            let f = File::open(&path).map_err(|e| Error::io(&path, e))?;
            for (i, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(|e| Error::io(&path, e))?;
                match serde_json::from_str::<CacheLine>(&line) {
                    Ok(c) => {
                        entries.insert(c.key, Arc::new(c.embedding));
                    }
                    Err(e) => log::warn!("{}: skipping unreadable cache line {}: {e}", path.display(), i + 1),
                }
            }
        }
        let f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            entries: RwLock::new(entries),
            file: Some(Mutex::new(BufWriter::new(f))),
            path: Some(path),
        })
    }

    pub fn key(model: &str, text: &str) -> String {
        let mut h = Sha256::new();
        h.update(model.as_bytes());
        h.update([0u8]);
        h.update(text.as_bytes());
        hex::encode(h.finalize())
    }

    pub fn get(&self, model: &str, text: &str) -> Option<Arc<Vec<f64>>> {
        self.entries.read().unwrap().get(&Self::key(model, text)).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert_many(&self, model: &str, items: &[(&str, Arc<Vec<f64>>)]) -> Result<()> {
        let mut entries = self.entries.write().unwrap();
        if let Some(file) = &self.file {
            let path = self.path.as_deref().unwrap_or(Path::new("<cache>"));
            let mut w = file.lock().unwrap();
            for (text, v) in items {
                let line = CacheLine {
                    key: Self::key(model, text),
                    embedding: v.to_vec(),
                };
                serde_json::to_writer(&mut *w, &line)?;
                w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
            }
            w.flush().map_err(|e| Error::io(path, e))?;
        }
        for (text, v) in items {
            entries.insert(Self::key(model, text), Arc::clone(v));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbedOptions {
    pub batch_size: usize,
    pub max_in_flight: usize,
    /// Inputs longer than this many characters are cut before sending.
    pub max_input_chars: Option<usize>,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        Self {
            batch_size: 32,
            max_in_flight: 4,
            max_input_chars: None,
        }
    }
}

fn prepare(text: &str, limit: Option<usize>) -> String {
    match limit {
        Some(n) if text.chars().count() > n => {
            log::info!("truncating embedding input of {} chars to {n}", text.chars().count());
            text.chars().take(n).collect()
        }
        _ => text.to_string(),
    }
}

fn check_dims<'a>(vectors: impl IntoIterator<Item = &'a Vec<f64>>) -> Result<()> {
    let mut dim = None;
    for v in vectors {
        match dim {
            None => dim = Some(v.len()),
            Some(d) if d != v.len() => {
                return Err(Error::Integrity(format!("embedding dimensions differ: {d} vs {}", v.len())))
            }
            _ => {}
        }
    }
    Ok(())
}

/// Embeds `texts`, serving cached entries without a request.
///
/// Uncached texts are deduplicated and sent in batches, at most
/// `max_in_flight` at a time. Successful batches are cached even when
/// another batch fails.
pub fn embed_batch(
    texts: &[String],
    embedder: &dyn Embedder,
    cache: &EmbeddingCache,
    options: &EmbedOptions,
) -> Result<Vec<Vec<f64>>> {
    let model = embedder.model();
    let mut missing: Vec<&str> = Vec::new();
    let mut queued = std::collections::HashSet::new();
    for t in texts {
        if cache.get(model, t).is_none() && queued.insert(t.as_str()) {
            missing.push(t);
        }
    }
    if !missing.is_empty() {
        let batches: Vec<&[&str]> = missing.chunks(options.batch_size.max(1)).collect();
        let results = bounded_map(&batches, options.max_in_flight, |batch| {
            let inputs: Vec<String> = batch.iter().map(|t| prepare(t, options.max_input_chars)).collect();
            let vecs = embedder.embed(&inputs)?;
            if vecs.len() != batch.len() {
                return Err(Error::Integrity(format!(
                    "asked for {} embeddings, got {}",
                    batch.len(),
                    vecs.len()
                )));
            }
            check_dims(&vecs)?;
            Ok(vecs)
        });
        let mut first_err = None;
        let mut fresh: Vec<(&str, Arc<Vec<f64>>)> = Vec::new();
        for (batch, res) in batches.iter().zip(results) {
            match res {
                Ok(vecs) => fresh.extend(batch.iter().copied().zip(vecs.into_iter().map(Arc::new))),
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        check_dims(fresh.iter().map(|(_, v)| v.as_ref()))?;
        cache.insert_many(model, &fresh)?;
        if let Some(e) = first_err {
            return Err(e);
        }
    }
    let out: Vec<Vec<f64>> = texts
        .iter()
        .map(|t| cache.get(model, t).expect("embedded above").to_vec())
        .collect();
    check_dims(&out)?;
    Ok(out)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Ranks target vectors by cosine similarity to `source_vec`.
pub fn rank_by_cosine(source_idx: usize, source_vec: &[f64], target_vecs: &[Vec<f64>]) -> Result<ScoredRanking> {
    let nu = norm(source_vec);
    if nu == 0.0 {
        return Err(Error::domain(format!("source {source_idx} has a zero-norm embedding")));
    }
    let scale = 10f64.powi(COSINE_DECIMALS);
    let mut scores = Vec::with_capacity(target_vecs.len());
    for (t, v) in target_vecs.iter().enumerate() {
        if v.len() != source_vec.len() {
            return Err(Error::validation(format!(
                "target {t} has dimension {}, source has {}",
                v.len(),
                source_vec.len()
            )));
        }
        let nv = norm(v);
        if nv == 0.0 {
            return Err(Error::domain(format!("target {t} has a zero-norm embedding")));
        }
        let dot: f64 = source_vec.iter().zip(v).map(|(a, b)| a * b).sum();
        scores.push((dot / (nu * nv) * scale).round() / scale);
    }
    Ok(ScoredRanking::from_scores(source_idx, &scores))
}
