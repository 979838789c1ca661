use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use linkforge_core::corpus::{
    compute_stats, convert_ecb, convert_f1000, load_dataset, save_dataset, EcbRecord, F1000Record, PairRecord,
};
use linkforge_core::llm::HttpChatModel;
use linkforge_core::synthgen::{
    clean_articles, generate_pairs, style_metrics, HttpSentenceScorer, SentenceScorer, StyleReport, SynthConfig,
};
use linkforge_core::{Domain, LinkingDataset, Role};

use crate::io::{read_jsonl, write_jsonl, RawDoc};
use crate::DomainArg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IngestFormat {
    Native,
    Ecb,
    F1000,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long, value_enum, default_value = "native")]
    pub format: IngestFormat,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Domain recorded on pairs that do not name one.
    #[arg(long, value_enum)]
    pub domain: Option<DomainArg>,
}

/// A native pair line whose documents may be given as running text.
#[derive(Debug, Deserialize)]
struct RawPair {
    pair_id: String,
    source: RawDoc,
    target: RawDoc,
    #[serde(default)]
    links: Vec<[usize; 2]>,
    #[serde(default)]
    meta: linkforge_core::corpus::Meta,
}

fn dataset_name(path: &std::path::Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn ingest(a: &IngestArgs) -> Result<()> {
    let name = dataset_name(&a.out);
    let mut ds = match a.format {
        IngestFormat::Native => {
            let raws: Vec<RawPair> = read_jsonl(&a.input)?;
            let pairs = raws
                .into_iter()
                .map(|r| {
                    PairRecord {
                        pair_id: r.pair_id,
                        source: r.source.into_record(),
                        target: r.target.into_record(),
                        links: r.links,
                        meta: r.meta,
                    }
                    .into_pair()
                })
                .collect::<linkforge_core::Result<Vec<_>>>()?;
            LinkingDataset::new(&name, Domain::Other, pairs)?
        }
        IngestFormat::Ecb => convert_ecb(&read_jsonl::<EcbRecord>(&a.input)?, &name)?,
        IngestFormat::F1000 => convert_f1000(&read_jsonl::<F1000Record>(&a.input)?, &name)?,
    };
    if let Some(d) = a.domain {
        for p in &mut ds.pairs {
            p.pair.meta.entry("domain".into()).or_insert_with(|| Domain::from(d).to_string());
        }
    }
    save_dataset(&ds, &a.out)?;
    eprintln!("ingested {} pairs with {} links into {}", ds.len(), ds.n_links(), a.out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub json: bool,
}

pub fn stats(a: &StatsArgs) -> Result<()> {
    let ds = load_dataset(&a.input)?;
    let s = compute_stats(&ds)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&s.to_json())?);
    } else {
        println!("{s}");
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct LlmArgs {
    /// Chat-completion endpoint.
    #[arg(long)]
    pub llm: String,
    #[arg(long, env = "LINKFORGE_MODEL")]
    pub model: String,
    #[arg(long, default_value_t = 4)]
    pub max_in_flight: usize,
}

impl LlmArgs {
    fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            max_in_flight: self.max_in_flight.max(1),
            ..SynthConfig::new(&self.model)
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub domain: DomainArg,
    /// Natural documents, one per line: `{doc_id, text}` or `{doc_id, sentences}`.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub llm: LlmArgs,
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let domain = Domain::from(a.domain);
    let naturals = read_jsonl::<RawDoc>(&a.input)?
        .into_iter()
        .map(|r| r.into_record().into_document(Role::Target))
        .collect::<linkforge_core::Result<Vec<_>>>()?;
    let chat = HttpChatModel::new(&a.llm.llm)?;
    let results = generate_pairs(&chat, &a.llm.synth_config(), domain, &naturals);
    let mut pairs = Vec::new();
    for (doc, r) in naturals.iter().zip(results) {
        match r {
            Ok(p) => pairs.push(p),
            Err(e) => log::warn!("generation for {} failed: {e}", doc.doc_id),
        }
    }
    let failed = naturals.len() - pairs.len();
    if pairs.is_empty() && !naturals.is_empty() {
        bail!("generation failed for all {} documents", naturals.len());
    }
    let ds = LinkingDataset::new(dataset_name(&a.out), domain, pairs)?;
    save_dataset(&ds, &a.out)?;
    eprintln!(
        "generated {} pairs ({failed} failed, {} chat requests) into {}",
        ds.len(),
        chat.request_count(),
        a.out.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct CleanArgs {
    /// Raw articles, one `{doc_id, text}` per line.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub llm: LlmArgs,
}

#[derive(Debug, Serialize, Deserialize)]
struct Article {
    doc_id: String,
    text: String,
}

pub fn clean(a: &CleanArgs) -> Result<()> {
    let articles: Vec<Article> = read_jsonl(&a.input)?;
    let texts: Vec<String> = articles.iter().map(|x| x.text.clone()).collect();
    let chat = HttpChatModel::new(&a.llm.llm)?;
    let results = clean_articles(&chat, &a.llm.synth_config(), &texts);
    let mut out = Vec::new();
    for (art, r) in articles.iter().zip(results) {
        match r {
            Ok(text) => out.push(Article {
                doc_id: art.doc_id.clone(),
                text,
            }),
            Err(e) => log::warn!("cleaning {} failed: {e}", art.doc_id),
        }
    }
    write_jsonl(&a.out, &out)?;
    eprintln!("cleaned {} of {} articles into {}", out.len(), articles.len(), a.out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct StyleArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Sentence-scoring endpoint for subjectivity.
    #[arg(long)]
    pub subjectivity: Option<String>,
    #[arg(long, default_value = "subjectivity")]
    pub subjectivity_model: String,
}

#[derive(Serialize)]
struct StyleRow<'a> {
    pair_id: &'a str,
    source: StyleReport,
    target: StyleReport,
}

pub fn style(a: &StyleArgs) -> Result<()> {
    let ds = load_dataset(&a.input)?;
    let scorer = a
        .subjectivity
        .as_ref()
        .map(|url| HttpSentenceScorer::new(url, &a.subjectivity_model))
        .transpose()?;
    let scorer = scorer.as_ref().map(|s| s as &dyn SentenceScorer);
    let mut stdout = std::io::stdout().lock();
    for p in &ds.pairs {
        let row = StyleRow {
            pair_id: p.pair_id(),
            source: style_metrics(&p.pair.source, scorer).with_context(|| format!("pair {}", p.pair_id()))?,
            target: style_metrics(&p.pair.target, scorer).with_context(|| format!("pair {}", p.pair_id()))?,
        };
        serde_json::to_writer(&mut stdout, &row)?;
        std::io::Write::write_all(&mut stdout, b"\n")?;
    }
    Ok(())
}
