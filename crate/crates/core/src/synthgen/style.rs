//! Document-level style statistics used to compare synthetic and natural text.

use std::collections::HashSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::text::tokenize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleReport {
    pub type_token_ratio: f64,
    pub flesch_reading_ease: f64,
    /// Mean per-sentence subjectivity; present only with a working scorer.
    pub subjectivity: Option<f64>,
    pub words: usize,
    pub sentences: usize,
    pub syllables: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Scores sentences in `[0, 1]`, e.g. a subjectivity classifier.
pub trait SentenceScorer: Send + Sync {
    fn score(&self, sentences: &[String]) -> Result<Vec<f64>>;
}

/// `POST {model, inputs:[...]}` answered by `{scores:[...]}`.
pub struct HttpSentenceScorer {
    url: String,
    model: String,
    client: reqwest::blocking::Client,
}

impl HttpSentenceScorer {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(Self {
            url: url.into(),
            model: model.into(),
            client,
        })
    }
}

#[derive(Deserialize)]
struct ScoreResponse {
    scores: Vec<f64>,
}

impl SentenceScorer for HttpSentenceScorer {
    fn score(&self, sentences: &[String]) -> Result<Vec<f64>> {
        let resp = self
            .client
            .post(&self.url)
            .json(&serde_json::json!({ "model": self.model, "inputs": sentences }))
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| Error::Transport(e.to_string()))?;
        let body: ScoreResponse = resp.json().map_err(|e| Error::Transport(e.to_string()))?;
        Ok(body.scores)
    }
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
}

/// Vowel-group syllable estimate with a silent-e correction.
///
/// Each maximal run of `aeiouy` is one syllable (a leading `y` counts as a
/// consonant). A final `e` is silent unless it is the only vowel group or it
/// closes a consonant + `le` ending. Every word has at least one syllable.
pub fn count_syllables(word: &str) -> usize {
    let w: Vec<char> = word
        .chars()
        .filter(|c| c.is_alphabetic())
        .flat_map(char::to_lowercase)
        .collect();
    if w.is_empty() {
        return 1;
    }
    let mut groups = 0;
    let mut in_group = false;
    for (i, &c) in w.iter().enumerate() {
        let vowel = is_vowel(c) && !(c == 'y' && i == 0);
        if vowel && !in_group {
            groups += 1;
        }
        in_group = vowel;
    }
    let n = w.len();
    if groups > 1 && w[n - 1] == 'e' && !is_vowel(w[n - 2]) {
        let consonant_le = n >= 3 && w[n - 2] == 'l' && !is_vowel(w[n - 3]);
        if !consonant_le {
            groups -= 1;
        }
    }
    groups.max(1)
}

pub fn flesch_reading_ease(words: usize, sentences: usize, syllables: usize) -> f64 {
    206.835 - 1.015 * (words as f64 / sentences as f64) - 84.6 * (syllables as f64 / words as f64)
}

/// Type-token ratio, Flesch reading ease, and optional mean subjectivity.
///
/// A failing scorer leaves `subjectivity` empty and records a warning.
pub fn style_metrics(doc: &Document, scorer: Option<&dyn SentenceScorer>) -> Result<StyleReport> {
    let tokens: Vec<String> = doc.sentences.iter().flat_map(|s| tokenize(&s.text)).collect();
    if tokens.is_empty() {
        return Err(Error::domain(format!("document {:?} has no word tokens", doc.doc_id)));
    }
    let distinct: HashSet<&str> = tokens.iter().map(String::as_str).collect();
    let syllables: usize = tokens.iter().map(|t| count_syllables(t)).sum();
    let sentences = doc.len();
    let mut report = StyleReport {
        type_token_ratio: distinct.len() as f64 / tokens.len() as f64,
        flesch_reading_ease: flesch_reading_ease(tokens.len(), sentences, syllables),
        subjectivity: None,
        words: tokens.len(),
        sentences,
        syllables,
        warning: None,
    };
    if let Some(scorer) = scorer {
        let texts: Vec<String> = doc.sentences.iter().map(|s| s.text.clone()).collect();
        let outcome = scorer.score(&texts).and_then(|scores| {
            if scores.len() != texts.len() {
                return Err(Error::Integrity(format!(
                    "scorer returned {} scores for {} sentences",
                    scores.len(),
                    texts.len()
                )));
            }
            if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
                return Err(Error::Integrity(format!("score {bad} outside [0, 1]")));
            }
            Ok(scores.iter().sum::<f64>() / scores.len() as f64)
        });
        match outcome {
            Ok(mean) => report.subjectivity = Some(mean),
            Err(e) => {
                log::warn!("subjectivity unavailable for {:?}: {e}", doc.doc_id);
                report.warning = Some(format!("subjectivity unavailable: {e}"));
            }
        }
    }
    Ok(report)
}
