//! Classification prompts for pairwise, listwise and retrieval-free linking.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Domain, Sentence};
use crate::error::{Error, Result};
use crate::llm::Prompt;

const PAIRWISE_SYSTEM: &str = "You are an AI assistant specialized in evaluating sentence relations.\n\
You will get two related documents, along with a sentence from Document 1 (source) and a sentence from Document 2 (target). \
Your task is to determine if the target sentence is related to the source sentence.";

const LISTWISE_SYSTEM: &str = "You are an AI assistant specialized in evaluating sentence relations.\n\
You will get two related documents, along with a sentence from Document 1 (source) and a list of sentences from Document 2 (targets). \
The targets are ranked based on their similarity to the source sentence. \
Your task is to determine for each target sentence if it is related to the source sentence. \
This will help filter out irrelevant sentences and improve the quality of the ranked sentences.";

const LLM_ONLY_SYSTEM: &str = "You are an AI assistant specialized in evaluating sentence relations.\n\
You will get two related documents, along with a sentence from Document 1 (source). \
Your task is to determine for each sentence in the target document (Document 2) if it is related to the source sentence. \
This will help filter out irrelevant sentences.";

const PAIRWISE_RESPONSE: &str =
    "Respond with a JSON object of the form {\"related\": true} or {\"related\": false}.";
const LISTWISE_RESPONSE: &str = "Respond with a JSON object with sentence IDs as keys and true or false as values, \
e.g. {\"0\": true, \"1\": false, \"2\": true}.";
const LLM_ONLY_RESPONSE: &str = "Respond with a JSON object where each key is a target sentence ID and each value is \
either true or false, e.g. {\"11\": true, \"4\": false, \"9\": true}. Ensure that every sentence in Document 2 is classified.";

const NEWS_GUIDANCE: &str = include_str!("../../guidance/news.json");
const REVIEWS_GUIDANCE: &str = include_str!("../../guidance/reviews.json");

/// Which guidance blocks a prompt carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptMode {
    pub description: bool,
    pub examples: bool,
}

impl PromptMode {
    pub const NONE: Self = Self::new(false, false);
    pub const EXAMPLES: Self = Self::new(false, true);
    pub const DESCRIPTION: Self = Self::new(true, false);
    pub const BOTH: Self = Self::new(true, true);

    pub const fn new(description: bool, examples: bool) -> Self {
        Self { description, examples }
    }

    pub fn all() -> [Self; 4] {
        [Self::NONE, Self::EXAMPLES, Self::DESCRIPTION, Self::BOTH]
    }

    /// 1 = no guidance, 2 = examples, 3 = description, 4 = both.
    pub fn number(self) -> u8 {
        match (self.description, self.examples) {
            (false, false) => 1,
            (false, true) => 2,
            (true, false) => 3,
            (true, true) => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match (self.description, self.examples) {
            (false, false) => "none",
            (false, true) => "ex",
            (true, false) => "desc",
            (true, true) => "both",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::all().into_iter().find(|m| m.as_str() == s)
    }
}

impl std::fmt::Display for PromptMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamplePair {
    pub source: String,
    pub target: String,
}

/// Link description and positive example pairs shown to the model.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Guidance {
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub examples: Vec<ExamplePair>,
}

impl Guidance {
    /// Built-in guidance for a domain; `Other` has none.
    pub fn for_domain(domain: Domain) -> Self {
        let raw = match domain {
            Domain::News => NEWS_GUIDANCE,
            Domain::Reviews => REVIEWS_GUIDANCE,
            Domain::Other => return Self::default(),
        };
        serde_json::from_str(raw).expect("bundled guidance is valid JSON")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    fn check(&self, mode: PromptMode) -> Result<()> {
        if mode.description && self.description.as_deref().is_none_or(|d| d.trim().is_empty()) {
            return Err(Error::Config(format!("mode {mode} needs a link description")));
        }
        if mode.examples && self.examples.is_empty() {
            return Err(Error::Config(format!("mode {mode} needs example pairs")));
        }
        Ok(())
    }

    fn render(&self, mode: PromptMode, out: &mut String) {
        if mode.description {
            let d = self.description.as_deref().unwrap_or_default().trim();
            let _ = write!(out, "Link description:\n{d}\n\n");
        }
        if mode.examples {
            out.push_str("Examples of related sentence pairs:\n");
            for (i, ex) in self.examples.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "Example {}\nSource: {}\nTarget: {}",
                    i + 1,
                    quoted(&ex.source),
                    quoted(&ex.target)
                );
            }
            out.push('\n');
        }
    }
}

fn quoted(s: &str) -> String {
    serde_json::Value::String(s.to_string()).to_string()
}

fn check_member(doc: &Document, s: &Sentence, what: &str) -> Result<()> {
    match doc.sentence(s.index) {
        Some(found) if found.text == s.text => Ok(()),
        _ => Err(Error::validation(format!(
            "{what} sentence {} is not part of document {:?}",
            s.index, doc.doc_id
        ))),
    }
}

fn header(doc_a: &Document, doc_b: &Document, src: &Sentence, full: bool) -> String {
    let prefix = if full { "Full " } else { "" };
    format!(
        "{prefix}Document 1: {}\n{prefix}Document 2: {}\nSource Sentence from Document 1: {}\n",
        doc_a.text(),
        doc_b.text(),
        src.text
    )
}

/// One source/target pair; the model answers `{"related": bool}`.
pub fn build_pairwise_prompt(
    doc_a: &Document,
    doc_b: &Document,
    src: &Sentence,
    tgt: &Sentence,
    mode: PromptMode,
    guidance: &Guidance,
) -> Result<Prompt> {
    guidance.check(mode)?;
    check_member(doc_a, src, "source")?;
    check_member(doc_b, tgt, "target")?;
    let mut user = String::new();
    guidance.render(mode, &mut user);
    user.push_str(&header(doc_a, doc_b, src, true));
    let _ = write!(user, "Target Sentence from Document 2: {}\n\n{PAIRWISE_RESPONSE}", tgt.text);
    Ok(Prompt {
        system: Some(PAIRWISE_SYSTEM.into()),
        user,
    })
}

/// Ranked candidates, one `idx: "text"` line each, in the given order.
pub fn build_listwise_prompt(
    doc_a: &Document,
    doc_b: &Document,
    src: &Sentence,
    candidates: &[(usize, String)],
    mode: PromptMode,
    guidance: &Guidance,
) -> Result<Prompt> {
    guidance.check(mode)?;
    check_member(doc_a, src, "source")?;
    if candidates.is_empty() {
        return Err(Error::validation("listwise prompt needs at least one candidate"));
    }
    let mut seen = HashSet::new();
    if let Some((dup, _)) = candidates.iter().find(|(t, _)| !seen.insert(*t)) {
        return Err(Error::validation(format!("candidate {dup} listed twice")));
    }
    let mut user = String::new();
    guidance.render(mode, &mut user);
    user.push_str(&header(doc_a, doc_b, src, false));
    user.push_str("Ranked Target Sentences from Document 2 (Sentence_ID: Sentence_text):\n");
    for (t, text) in candidates {
        let _ = writeln!(user, "{t}: {}", quoted(text));
    }
    let _ = write!(user, "\n{LISTWISE_RESPONSE}");
    Ok(Prompt {
        system: Some(LISTWISE_SYSTEM.into()),
        user,
    })
}

/// Every target sentence is classified; Document 2 is listed with its IDs.
pub fn build_llm_only_prompt(
    doc_a: &Document,
    doc_b: &Document,
    src: &Sentence,
    mode: PromptMode,
    guidance: &Guidance,
) -> Result<Prompt> {
    guidance.check(mode)?;
    check_member(doc_a, src, "source")?;
    let mut user = String::new();
    guidance.render(mode, &mut user);
    let _ = writeln!(user, "Document 1: {}", doc_a.text());
    user.push_str("Document 2 (Sentence_ID: Sentence_text):\n");
    for s in &doc_b.sentences {
        let _ = writeln!(user, "{}: {}", s.index, quoted(&s.text));
    }
    let _ = write!(user, "Source Sentence from Document 1: {}\n\n{LLM_ONLY_RESPONSE}", src.text);
    Ok(Prompt {
        system: Some(LLM_ONLY_SYSTEM.into()),
        user,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Role;

    fn docs() -> (Document, Document) {
        let a = Document::from_texts("a", Role::Source, ["Storm hits town.", "Power is out."]).unwrap();
        let b = Document::from_texts("b", Role::Target, (0..12).map(|i| format!("Target line {i}."))).unwrap();
        (a, b)
    }

    fn guidance() -> Guidance {
        Guidance::for_domain(Domain::News)
    }

    fn cands(b: &Document, order: &[usize]) -> Vec<(usize, String)> {
        order.iter().map(|&t| (t, b.sentences[t].text.clone())).collect()
    }

    #[test]
    fn mode_table() {
        assert_eq!(PromptMode::all().map(PromptMode::number), [1, 2, 3, 4]);
        for m in PromptMode::all() {
            assert_eq!(PromptMode::parse(m.as_str()), Some(m));
        }
        assert_eq!(PromptMode::parse("all"), None);
    }

    #[test]
    fn bundled_guidance_is_complete() {
        for d in [Domain::News, Domain::Reviews] {
            let g = Guidance::for_domain(d);
            g.check(PromptMode::BOTH).unwrap();
        }
        assert!(Guidance::for_domain(Domain::Other).check(PromptMode::NONE).is_ok());
    }

    #[test]
    fn mode_one_has_no_guidance_blocks() {
        let (a, b) = docs();
        let p = build_pairwise_prompt(&a, &b, &a.sentences[0], &b.sentences[3], PromptMode::NONE, &guidance()).unwrap();
        assert!(!p.user.contains("Link description"));
        assert!(!p.user.contains("Examples of related"));
        assert!(p.user.contains("Full Document 1: Storm hits town. Power is out."));
        assert!(p.user.contains("Target Sentence from Document 2: Target line 3."));
        assert!(p.system.unwrap().contains("specialized in evaluating sentence relations"));
    }

    #[test]
    fn mode_four_puts_description_before_examples() {
        let (a, b) = docs();
        let p = build_pairwise_prompt(&a, &b, &a.sentences[0], &b.sentences[0], PromptMode::BOTH, &guidance()).unwrap();
        let d = p.user.find("Link description").unwrap();
        let e = p.user.find("Examples of related").unwrap();
        assert!(d < e && e < p.user.find("Full Document 1").unwrap());
    }

    #[test]
    fn missing_guidance_is_a_config_error() {
        let (a, b) = docs();
        let empty = Guidance::default();
        for m in [PromptMode::DESCRIPTION, PromptMode::EXAMPLES, PromptMode::BOTH] {
            let r = build_pairwise_prompt(&a, &b, &a.sentences[0], &b.sentences[0], m, &empty);
            assert!(matches!(r, Err(Error::Config(_))), "{m}");
        }
        assert!(build_pairwise_prompt(&a, &b, &a.sentences[0], &b.sentences[0], PromptMode::NONE, &empty).is_ok());
    }

    #[test]
    fn builders_are_pure() {
        let (a, b) = docs();
        let g = guidance();
        let c = cands(&b, &[7, 2, 9]);
        assert_eq!(
            build_listwise_prompt(&a, &b, &a.sentences[1], &c, PromptMode::BOTH, &g).unwrap(),
            build_listwise_prompt(&a, &b, &a.sentences[1], &c, PromptMode::BOTH, &g).unwrap()
        );
    }

    #[test]
    fn listwise_lines_follow_rank_order() {
        let (a, b) = docs();
        let p = build_listwise_prompt(&a, &b, &a.sentences[0], &cands(&b, &[7, 2, 9]), PromptMode::NONE, &guidance())
            .unwrap()
            .user;
        let lines: Vec<&str> = p
            .lines()
            .filter(|l| l.split_once(": \"").is_some_and(|(k, _)| k.parse::<usize>().is_ok()))
            .collect();
        assert_eq!(lines, vec!["7: \"Target line 7.\"", "2: \"Target line 2.\"", "9: \"Target line 9.\""]);
        let ten = build_listwise_prompt(&a, &b, &a.sentences[0], &cands(&b, &(0..10).collect::<Vec<_>>()), PromptMode::NONE, &guidance())
            .unwrap()
            .user;
        let n = ten
            .lines()
            .filter(|l| l.split_once(": \"").is_some_and(|(k, _)| k.parse::<usize>().is_ok()))
            .count();
        assert_eq!(n, 10);
    }

    #[test]
    fn listwise_rejects_bad_candidates() {
        let (a, b) = docs();
        let g = guidance();
        assert!(matches!(
            build_listwise_prompt(&a, &b, &a.sentences[0], &[], PromptMode::NONE, &g),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            build_listwise_prompt(&a, &b, &a.sentences[0], &cands(&b, &[1, 1]), PromptMode::NONE, &g),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn foreign_sentences_are_rejected() {
        let (a, b) = docs();
        let stranger = Sentence::new(0, "Not in the document.");
        assert!(build_pairwise_prompt(&a, &b, &stranger, &b.sentences[0], PromptMode::NONE, &guidance()).is_err());
        assert!(build_pairwise_prompt(&a, &b, &a.sentences[0], &Sentence::new(40, "x"), PromptMode::NONE, &guidance()).is_err());
    }

    #[test]
    fn llm_only_lists_every_target() {
        let (a, b) = docs();
        let p = build_llm_only_prompt(&a, &b, &a.sentences[0], PromptMode::EXAMPLES, &guidance()).unwrap().user;
        for s in &b.sentences {
            assert!(p.contains(&format!("{}: \"{}\"", s.index, s.text)));
        }
        assert!(p.contains("Ensure that every sentence in Document 2 is classified."));
    }
}
