//! Stand-in chat and embedding endpoints plus helpers for driving the binary.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Map, Value};

pub const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/desk_pairs.jsonl");

pub type Log = Arc<Mutex<Vec<Value>>>;
type Reply = fn(&Value) -> Value;

pub struct MockServer {
    pub url: String,
    pub requests: Log,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
}

impl MockServer {
    pub fn count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }

    pub fn requests(&self) -> Vec<Value> {
        self.requests.lock().unwrap().clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
    }
}

fn spawn(reply: Reply) -> MockServer {
    let requests: Log = Arc::default();
    let log = requests.clone();
    let (url_tx, url_rx) = std::sync::mpsc::channel();
    let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            url_tx.send(format!("http://{}/", listener.local_addr().unwrap())).unwrap();
            let app = Router::new()
                .route(
                    "/",
                    post(|State((log, reply)): State<(Log, Reply)>, Json(body): Json<Value>| async move {
                        let out = reply(&body);
                        log.lock().unwrap().push(body);
                        Json(out)
                    }),
                )
                .with_state((log, reply));
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = stop_rx.await;
                })
                .await
                .unwrap();
        });
    });
    MockServer {
        url: url_rx.recv().unwrap(),
        requests,
        stop: Some(stop_tx),
    }
}

/// Chat endpoint answering from the prompt text alone.
pub fn chat_server() -> MockServer {
    spawn(|req| json!({ "choices": [{ "message": { "content": scripted_reply(req) } }] }))
}

/// Embedding endpoint returning letter-frequency vectors.
pub fn embed_server() -> MockServer {
    spawn(|req| {
        let data: Vec<Value> = req["input"]
            .as_array()
            .unwrap()
            .iter()
            .enumerate()
            .map(|(i, t)| json!({ "index": i, "embedding": letter_vector(t.as_str().unwrap()) }))
            .collect();
        json!({ "data": data })
    })
}

pub fn letter_vector(text: &str) -> Vec<f64> {
    let mut v = vec![0.0; 27];
    v[26] = 1.0;
    for c in text.to_lowercase().chars().filter(char::is_ascii_lowercase) {
        v[(c as u8 - b'a') as usize] += 1.0;
    }
    v
}

/// Lowercase words of five letters or more.
pub fn content_words(text: &str) -> BTreeSet<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_ascii_alphabetic())
        .filter(|w| w.len() >= 5)
        .map(String::from)
        .collect()
}

pub fn related(a: &str, b: &str) -> bool {
    !content_words(a).is_disjoint(&content_words(b))
}

fn user_text(req: &Value) -> String {
    req["messages"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|m| m["role"] == "user")
        .map(|m| m["content"].as_str().unwrap().to_string())
        .collect()
}

fn line_after<'a>(text: &'a str, marker: &str) -> Option<&'a str> {
    text.split_once(marker).map(|(_, rest)| rest.lines().next().unwrap_or("").trim())
}

/// `id: "text"` lines following `header` up to the first line that does not match.
pub fn id_lines(text: &str, header: &str) -> Vec<(usize, String)> {
    let Some((_, rest)) = text.split_once(header) else {
        return Vec::new();
    };
    rest.lines()
        .skip(1)
        .map_while(|l| {
            let (id, body) = l.split_once(": ")?;
            let id = id.parse().ok()?;
            let text: String = serde_json::from_str(body).ok()?;
            Some((id, text))
        })
        .collect()
}

pub const LISTWISE_HEADER: &str = "Ranked Target Sentences from Document 2 (Sentence_ID: Sentence_text):";
pub const LLM_ONLY_HEADER: &str = "Document 2 (Sentence_ID: Sentence_text):";

/// Deterministic reply: a target is related when it shares a content word
/// with the source. Listwise replies drop the last candidate when the source
/// sentence starts with "Meanwhile".
pub fn scripted_reply(req: &Value) -> String {
    let user = user_text(req);
    if user.contains("cleaned_article") {
        let article = user.rsplit("Input:").next().unwrap_or("").trim();
        return json!({ "cleaned_article": article.lines().next().unwrap_or("").trim() }).to_string();
    }
    if user.contains("8-12 sentences") || user.contains("3 to 5 sentences") {
        let key = if user.contains("8-12 sentences") { "review" } else { "article" };
        let body: Map<String, Value> = (0..4)
            .map(|i| (i.to_string(), json!(format!("Generated sentence number {i}."))))
            .collect();
        let mapping = json!({ "0": [0], "1": null, "2": [0], "3": null });
        return json!({ key: body, "mapping": mapping }).to_string();
    }
    let source = line_after(&user, "Source Sentence from Document 1:").unwrap_or("").to_string();
    if let Some(target) = line_after(&user, "Target Sentence from Document 2:") {
        return json!({ "related": related(&source, target) }).to_string();
    }
    let (cands, drop_last) = if user.contains(LISTWISE_HEADER) {
        (id_lines(&user, LISTWISE_HEADER), source.starts_with("Meanwhile"))
    } else {
        (id_lines(&user, LLM_ONLY_HEADER), false)
    };
    let keep = cands.len() - usize::from(drop_last && !cands.is_empty());
    let obj: Map<String, Value> = cands[..keep]
        .iter()
        .map(|(id, text)| (id.to_string(), Value::Bool(related(&source, text))))
        .collect();
    Value::Object(obj).to_string()
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_linkforge"))
}

pub fn linkforge(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

/// Runs the binary and fails with its stderr unless it succeeds.
pub fn ok(args: &[&str]) -> Output {
    let out = linkforge(args);
    assert!(
        out.status.success(),
        "linkforge {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}
