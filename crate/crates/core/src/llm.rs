//! Chat-completion client used for generation, cleaning and link classification.
//!
//! Wire format: `POST {model, messages:[{role, content}], temperature, top_p,
//! response_format}` answered by `{choices:[{message:{content}}]}`.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

pub const DEFAULT_TEMPERATURE: f64 = 0.3;
pub const DEFAULT_TOP_P: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

/// A prompt as a system message plus one user turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub system: Option<String>,
    pub user: String,
}

impl Prompt {
    pub fn user_only(user: impl Into<String>) -> Self {
        Self {
            system: None,
            user: user.into(),
        }
    }

    pub fn messages(&self) -> Vec<ChatMessage> {
        self.system
            .iter()
            .map(ChatMessage::system)
            .chain(std::iter::once(ChatMessage::user(&self.user)))
            .collect()
    }
}

impl std::fmt::Display for Prompt {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if let Some(system) = &self.system {
            writeln!(f, "{system}")?;
            writeln!(f)?;
        }
        f.write_str(&self.user)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub temperature: f64,
    pub top_p: f64,
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            temperature: DEFAULT_TEMPERATURE,
            top_p: DEFAULT_TOP_P,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseFormat {
    #[serde(rename = "type")]
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub top_p: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response_format: Option<ResponseFormat>,
}

impl ChatRequest {
    pub fn json(model: &str, prompt: &Prompt, sampling: Sampling) -> Self {
        Self {
            model: model.to_string(),
            messages: prompt.messages(),
            temperature: sampling.temperature,
            top_p: sampling.top_p,
            response_format: Some(ResponseFormat {
                kind: "json_object".into(),
            }),
        }
    }
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Debug, Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

/// Anything that turns a chat request into the assistant's reply text.
pub trait ChatModel: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String>;
}

impl<T: ChatModel + ?Sized> ChatModel for &T {
    fn complete(&self, request: &ChatRequest) -> Result<String> {
        (**self).complete(request)
    }
}

/// HTTP chat endpoint. Transport failures and 5xx answers are retried.
pub struct HttpChatModel {
    url: String,
    client: reqwest::blocking::Client,
    retries: usize,
    requests: AtomicUsize,
}

impl HttpChatModel {
    pub fn new(url: impl Into<String>) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(600))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(Self {
            url: url.into(),
            client,
            retries: 2,
            requests: AtomicUsize::new(0),
        })
    }

    pub fn with_retries(mut self, retries: usize) -> Self {
        self.retries = retries;
        self
    }

    /// Number of HTTP requests issued so far, retries included.
    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::Relaxed)
    }
}

impl ChatModel for HttpChatModel {
    fn complete(&self, request: &ChatRequest) -> Result<String> {
        let mut last = String::new();
        for attempt in 0..=self.retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(200 * attempt as u64));
            }
            self.requests.fetch_add(1, Ordering::Relaxed);
            let resp = match self.client.post(&self.url).json(request).send() {
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
            let body: ChatResponse = resp
                .json()
                .map_err(|e| Error::Transport(format!("bad chat response body: {e}")))?;
            return body
                .choices
                .into_iter()
                .next()
                .and_then(|c| c.message.content)
                .ok_or_else(|| Error::Transport("chat response without content".into()));
        }
        Err(Error::Transport(format!(
            "chat request failed after {} attempts: {last}",
            self.retries + 1
        )))
    }
}

/// Pulls the outermost JSON object out of a model reply.
///
/// Tolerates reasoning blocks (`<think>…</think>`), code fences and prose
/// around the object.
pub fn extract_json_object(raw: &str) -> Result<Map<String, Value>> {
    let body = match raw.rfind("</think>") {
        Some(end) => &raw[end + "</think>".len()..],
        None => raw,
    };
    let bad = |why: &str| Error::MalformedOutput(format!("{why}: {}", preview(raw)));
    let start = body.find('{').ok_or_else(|| bad("no JSON object"))?;
    let end = body.rfind('}').ok_or_else(|| bad("no JSON object"))?;
    if end < start {
        return Err(bad("no JSON object"));
    }
    match serde_json::from_str::<Value>(&body[start..=end]) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(bad("not a JSON object")),
        Err(e) => Err(bad(&format!("invalid JSON ({e})"))),
    }
}

fn preview(raw: &str) -> String {
    let mut s: String = raw.chars().take(120).collect();
    if s.len() < raw.len() {
        s.push('…');
    }
    s
}

/// Outcome of a structured request, with the number of model calls spent.
#[derive(Debug, Clone)]
pub struct Attempted<T> {
    pub value: T,
    pub calls: usize,
}

/// Sends `prompt`, parses the reply, and re-sends the same prompt once when
/// the reply is malformed. Errors other than [`Error::MalformedOutput`] from
/// `parse` are returned immediately.
pub fn complete_structured<T>(
    model: &dyn ChatModel,
    model_name: &str,
    prompt: &Prompt,
    sampling: Sampling,
    parse: impl Fn(&str) -> Result<T>,
) -> Result<Attempted<T>> {
    let request = ChatRequest::json(model_name, prompt, sampling);
    let mut calls = 0;
    let mut last_err = None;
    for _ in 0..2 {
        calls += 1;
        let reply = model.complete(&request)?;
        match parse(&reply) {
            Ok(value) => return Ok(Attempted { value, calls }),
            Err(e @ Error::MalformedOutput(_)) => {
                log::warn!("malformed model output (attempt {calls}): {e}");
                last_err = Some(e);
            }
            Err(other) => return Err(other),
        }
    }
    Err(last_err.expect("two failed attempts"))
}

#[cfg(test)]
pub(crate) mod scripted {
    use std::collections::VecDeque;
    use std::sync::Mutex;

    use super::*;

    /// Replays canned replies in order and records every request.
    #[derive(Default)]
    pub struct Scripted {
        replies: Mutex<VecDeque<String>>,
        pub seen: Mutex<Vec<ChatRequest>>,
    }

    impl Scripted {
        pub fn new<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
            Self {
                replies: Mutex::new(replies.into_iter().map(Into::into).collect()),
                seen: Mutex::new(Vec::new()),
            }
        }

        pub fn calls(&self) -> usize {
            self.seen.lock().unwrap().len()
        }
    }

    impl ChatModel for Scripted {
        fn complete(&self, request: &ChatRequest) -> Result<String> {
            self.seen.lock().unwrap().push(request.clone());
            self.replies
                .lock()
                .unwrap()
                .pop_front()
                .ok_or_else(|| Error::Transport("script exhausted".into()))
        }
    }

    /// Answers every request through a closure over the request.
    pub struct Responder<F>(pub F, pub Mutex<usize>);

    impl<F: Fn(&ChatRequest) -> String + Send + Sync> ChatModel for Responder<F> {
        fn complete(&self, request: &ChatRequest) -> Result<String> {
            *self.1.lock().unwrap() += 1;
            Ok((self.0)(request))
        }
    }
}
