//! Prompt templates for article cleaning and synthetic document generation.

use std::collections::BTreeMap;

use crate::corpus::Domain;
use crate::error::{Error, Result};
use crate::llm::Prompt;

pub(crate) const CLEANING_KEY: &str = "cleaned_article";

const CLEANING_TEMPLATE: &str = "This is a scrapped article from Wikinews. Due to the scrapping, it may contain \
sentences that are image captions and social media links. Remove such sentences, but do not change the content \
of the article. Output the cleaned article in JSON format, where the key is 'cleaned_article' and the value is \
the cleaned article text.\nInput: ";

const REVIEW_TEMPLATE: &str = "Task Overview
You are a peer reviewer evaluating a research paper in NLP. Your task is to write a realistic and well-rounded peer review for the paper.
Guidelines:
- Your review should be structured and natural, consisting of 8-12 sentences.
- 3 to 5 sentences should be implicitly grounded in specific ideas from the paper. These should express relevant critiques, observations, or praises without directly quoting or referencing the original text.
- The remaining sentences should address broader aspects such as clarity, methodology, contributions, generalization, writing quality, or suggestions for improvement.
- Do NOT explicitly cite, reference, or quote any sentence from the paper. The review should not be a direct commentary on specific lines.
How to Structure the Review:
- Rephrase, summarize, or abstract ideas: When addressing parts of the paper, reword and generalize instead of copying.
- Introduce new considerations: Some comments should reflect editorial judgment, unanswered questions, or high-level concerns rather than being tied to specific sentences.
- Omit some possible links: Not every review sentence should directly correspond to a sentence from the paper. Aim for a balanced mix of specific and general feedback.
- Rearrange information: The review's flow should be different from the order of the paper to reflect a natural peer review process.
Input Format
You will receive a JSON object where:
- Each key is a sentence index from a paper section(s).
- Each value is the corresponding sentence text.
Output Format
- A peer review as a JSON object where:
    - Each key is a sentence index in the review (starting from 0).
    - Each value is the corresponding sentence text.
- A sentence mapping that links review sentences to the paper as a JSON object where:
    - Keys: Indices from the peer review.
    - Values: A list of corresponding indices from the paper section(s), or null if the sentence is not directly linked.
Example Input:{INPUT_EXAMPLE}
Example Output:{OUTPUT_EXAMPLE}
Input:{INPUT}
Output:";

const NEWS_TEMPLATE: &str = "Task Overview:
You are generating a news article that covers the same event or topic as an original article presenting it from a different editorial angle. The goal is to simulate how separate news organizations might independently report on the same subject, differing in structure, tone, detail, and emphasis. The new article should be a plausible alternative version of coverage on the same topic, not a direct rephrasing or summary of the original.
Guidelines:
- The article should be realistic, coherent, and reflective of a distinctive voice or editorial style.
- 3 to 5 sentences in the new article should reflect content from the original. These sentences may describe similar facts, events, or issues, but using different wording, tone, or framing.
- Do not replicate the original article's sentence-by-sentence structure or closely paraphrase its content.
- The remaining sentences should introduce: New but plausible perspectives, context, or editorial framing. Additional background or expert input. A different narrative structure or omission of certain original points.
- The new article must have a different length from the original, but not be much shorter than the original.
Variation Strategies:
- Rephrase and shift style: Change vocabulary, sentence structure, or writing tone to reflect a different editorial voice.
- Frame the topic differently: Adjust emphasis or viewpoint, for example, highlighting controversy, local impact, or long-term implications.
- Add or omit information: Introduce plausible context, background, or expert input, or skip less relevant details from the original.
- Reorganize the narrative: Present the information in a different order to create a new logical or rhetorical flow.
Input Format:
You will receive a JSON object where:
- Each key is a sentence index from the original article.
- Each value is the corresponding sentence text.
Output Format:
- The generated news article as a JSON object:
    - Keys: Indices of sentences in the new article (starting from 0).
    - Values: The text of each sentence.
A sentence mapping that links sentences in the new article to sentences in the original article as a JSON object where:
    - Keys: Indices of sentences in the new article.
    - Values: A list of sentence indices from the original that the new sentence relates to, or null if it is not directly linked to any original sentence.
Example input: {INPUT_EXAMPLE}
Example Output: {OUTPUT_EXAMPLE}
Input: {INPUT}
Output:";

const REVIEW_EXAMPLE_INPUT: &[&str] = &[
    "We study keyword extraction for short technical notes.",
    "Our method ranks candidate phrases with a co-occurrence graph.",
    "We evaluate on three public benchmarks.",
    "The graph variant improves F1 by four points over frequency baselines.",
    "Runtime grows linearly with document length.",
];

const REVIEW_EXAMPLE_OUTPUT: &str = r#"{"review": {"0": "The submission tackles phrase extraction from brief technical texts.", "1": "Building a co-occurrence structure over candidates is a sensible design choice.", "2": "The reported gain over counting baselines is encouraging but modest.", "3": "I would like to see significance tests across the evaluation sets.", "4": "The writing is clear and easy to follow.", "5": "A discussion of failure cases would strengthen the paper.", "6": "The scaling behaviour with longer inputs is reassuring.", "7": "Overall this is a solid but incremental contribution."}, "mapping": {"0": [0], "1": [1], "2": [3], "3": null, "4": null, "5": null, "6": [4], "7": null}}"#;

const NEWS_EXAMPLE_INPUT: &[&str] = &[
    "The city council approved a new bike lane network on Tuesday.",
    "The plan adds 40 kilometres of protected lanes over three years.",
    "Local shop owners raised concerns about lost parking.",
    "The mayor called the vote a turning point for transport.",
];

const NEWS_EXAMPLE_OUTPUT: &str = r#"{"article": {"0": "Cyclists cheered outside city hall after councillors backed a sweeping cycling plan.", "1": "Critics on the high street fear the changes will cost them customers who arrive by car.", "2": "Transport researchers note that similar schemes abroad took years to show results.", "3": "The programme will be rolled out in phases until the end of the decade.", "4": "City officials framed the decision as a break with decades of car-first planning."}, "mapping": {"0": [0], "1": [2], "2": null, "3": [1], "4": [3]}}"#;

/// Cleaning prompt with the raw article appended after `Input:`.
pub fn build_cleaning_prompt(article: &str) -> Prompt {
    Prompt::user_only(format!("{CLEANING_TEMPLATE}{article}"))
}

/// Length of the cleaning template without any article.
pub fn cleaning_template_len() -> usize {
    CLEANING_TEMPLATE.len()
}

/// Serializes `0..n` index-keyed sentences as a JSON object in ascending key order.
pub(crate) fn indexed_json<S: AsRef<str>>(sentences: &[S]) -> String {
    let body = sentences
        .iter()
        .enumerate()
        .map(|(i, s)| format!("\"{i}\": {}", serde_json::Value::String(s.as_ref().to_string())))
        .collect::<Vec<_>>()
        .join(", ");
    format!("{{{body}}}")
}

/// Generation prompt for the given domain over an index-keyed natural document.
///
/// Keys must be exactly `0..n`.
pub fn build_generation_prompt(domain: Domain, indexed: &BTreeMap<usize, String>) -> Result<Prompt> {
    if indexed.is_empty() {
        return Err(Error::validation("generation input has no sentences"));
    }
    if let Some((pos, &key)) = indexed.keys().enumerate().find(|&(pos, &k)| pos != k) {
        return Err(Error::validation(format!(
            "generation input keys are not contiguous: expected {pos}, found {key}"
        )));
    }
    let sentences: Vec<&String> = indexed.values().collect();
    let (template, example_in, example_out) = match domain {
        Domain::Reviews => (REVIEW_TEMPLATE, REVIEW_EXAMPLE_INPUT, REVIEW_EXAMPLE_OUTPUT),
        Domain::News => (NEWS_TEMPLATE, NEWS_EXAMPLE_INPUT, NEWS_EXAMPLE_OUTPUT),
        Domain::Other => {
            return Err(Error::Config("synthetic generation supports the news and reviews domains".into()))
        }
    };
    let text = template
        .replace("{INPUT_EXAMPLE}", &indexed_json(example_in))
        .replace("{OUTPUT_EXAMPLE}", example_out)
        .replace("{INPUT}", &indexed_json(&sentences));
    Ok(Prompt::user_only(text))
}

/// Key under which the generated text is expected for `domain`.
pub(crate) fn text_key(domain: Domain) -> &'static str {
    match domain {
        Domain::Reviews => "review",
        _ => "article",
    }
}
