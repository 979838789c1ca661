use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};

use linkforge_core::corpus::load_dataset;
use linkforge_core::evaluate::{evaluate_predictions, EvalOptions};
use linkforge_core::llm::{HttpChatModel, Sampling, DEFAULT_TEMPERATURE, DEFAULT_TOP_P};
use linkforge_core::predictions::{load_predictions, save_predictions};
use linkforge_core::refine::{default_k, refine_dataset, Classifier, Guidance, PromptMode, RefineConfig, RefineForm};
use linkforge_core::retrieval::{
    retrieve_dataset, Bm25Ranker, DenseRanker, EmbedOptions, EmbeddingCache, HttpEmbedder, PairRanker, RetrievalConfig,
    RetrievalMethod,
};

use crate::io::{write_json, write_jsonl};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Bm25,
    Dense,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "bm25")]
    pub method: MethodArg,
    /// Keep only the top `k` targets per source; all are kept when absent.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Embedding endpoint for dense retrieval.
    #[arg(long)]
    pub embed: Option<String>,
    /// Embedding model name.
    #[arg(long)]
    pub model: Option<String>,
    /// Directory holding the persistent embedding cache.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 1.2)]
    pub k1: f64,
    #[arg(long, default_value_t = 0.75)]
    pub b: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 4)]
    pub max_in_flight: usize,
    /// Inputs longer than this are truncated before embedding.
    #[arg(long)]
    pub max_input_chars: Option<usize>,
}

pub fn retrieve(a: &RetrieveArgs) -> Result<()> {
    let ds = load_dataset(&a.input)?;
    let cfg = RetrievalConfig {
        method: match a.method {
            MethodArg::Bm25 => RetrievalMethod::Bm25,
            MethodArg::Dense => RetrievalMethod::Dense,
        },
        k1: a.k1,
        b: a.b,
        embed_model: a.model.clone().unwrap_or_default(),
        cache_dir: a.cache_dir.clone(),
    };
    cfg.validate()?;
    if a.k == Some(0) {
        bail!("--k must be at least 1");
    }
    let records = match cfg.method {
        RetrievalMethod::Bm25 => retrieve_dataset(&ds, &Bm25Ranker { k1: cfg.k1, b: cfg.b }, a.k)?,
        RetrievalMethod::Dense => {
            let (Some(url), Some(model)) = (&a.embed, &a.model) else {
                bail!("dense retrieval needs --embed URL and --model NAME");
            };
            let embedder = HttpEmbedder::new(url, model)?;
            let cache = match &cfg.cache_dir {
                Some(dir) => EmbeddingCache::open(dir)?,
                None => EmbeddingCache::in_memory(),
            };
            let ranker = DenseRanker {
                embedder: &embedder,
                cache: &cache,
                options: EmbedOptions {
                    batch_size: a.batch_size.max(1),
                    max_in_flight: a.max_in_flight.max(1),
                    max_input_chars: a.max_input_chars,
                },
            };
            let out = retrieve_dataset(&ds, &ranker as &dyn PairRanker, a.k)?;
            log::info!("embedding requests: {}", embedder.request_count());
            out
        }
    };
    save_predictions(&records, &a.out)?;
    eprintln!("ranked {} pairs into {}", records.len(), a.out.display());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormArg {
    Pairwise,
    Listwise,
    LlmOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    None,
    Desc,
    Ex,
    Both,
}

impl From<ModeArg> for PromptMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::None => PromptMode::NONE,
            ModeArg::Desc => PromptMode::DESCRIPTION,
            ModeArg::Ex => PromptMode::EXAMPLES,
            ModeArg::Both => PromptMode::BOTH,
        }
    }
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Retriever predictions; not used with `--form llm-only`.
    #[arg(long)]
    pub rankings: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "listwise")]
    pub form: FormArg,
    #[arg(long, value_enum, default_value = "both")]
    pub mode: ModeArg,
    /// Candidates per source; defaults to 10 for news and 20 otherwise.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub llm: String,
    #[arg(long, env = "LINKFORGE_MODEL")]
    pub model: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Link description and examples; the built-in text for the dataset
    /// domain is used when absent.
    #[arg(long)]
    pub guidance: Option<PathBuf>,
    /// Per-source audit lines (failures, defaulted and extraneous ids).
    #[arg(long)]
    pub audit: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub max_in_flight: usize,
    #[arg(long, default_value_t = DEFAULT_TEMPERATURE)]
    pub temperature: f64,
    #[arg(long, default_value_t = DEFAULT_TOP_P)]
    pub top_p: f64,
    /// Reject prompts longer than this many characters.
    #[arg(long)]
    pub max_prompt_chars: Option<usize>,
}

pub fn refine(a: &RefineArgs) -> Result<()> {
    let ds = load_dataset(&a.input)?;
    let form = match a.form {
        FormArg::Pairwise => RefineForm::Pairwise,
        FormArg::Listwise => RefineForm::Listwise,
        FormArg::LlmOnly => RefineForm::LlmOnly,
    };
    let rankings = match (&a.rankings, form) {
        (Some(p), _) => Some(load_predictions(p)?),
        (None, RefineForm::LlmOnly) => None,
        (None, _) => bail!("--rankings is required for {} refinement", form.as_str()),
    };
    let guidance = match &a.guidance {
        Some(p) => Guidance::load(p)?,
        None => Guidance::for_domain(ds.domain),
    };
    let chat = HttpChatModel::new(&a.llm)?;
    let classifier = Classifier {
        chat: &chat,
        model: &a.model,
        sampling: Sampling {
            temperature: a.temperature,
            top_p: a.top_p,
        },
        mode: a.mode.into(),
        guidance: &guidance,
        max_prompt_chars: a.max_prompt_chars,
    };
    let cfg = RefineConfig {
        form,
        k: a.k.unwrap_or_else(|| default_k(ds.domain)),
        max_in_flight: a.max_in_flight.max(1),
    };
    let out = refine_dataset(&classifier, &cfg, &ds, rankings.as_ref())?;
    save_predictions(&out.records, &a.out)?;
    if let Some(path) = &a.audit {
        write_jsonl(path, &out.audit)?;
    }
    let defaulted: usize = out.audit.iter().map(|x| x.defaulted.len()).sum();
    eprintln!(
        "refined {} pairs with {} model requests; {} sources failed, {defaulted} missing ids defaulted to false",
        out.records.len(),
        out.requests,
        out.failed_sources()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,3,5,7,10,20")]
    pub cutoffs: Vec<usize>,
    /// Cutoff for the separate recall column; domain default when absent.
    #[arg(long)]
    pub recall_k: Option<usize>,
    /// JSON report destination.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let ds = load_dataset(&a.gold)?;
    let preds = load_predictions(&a.pred)?;
    let mut opts = EvalOptions::for_domain(ds.domain);
    opts.cutoffs = a.cutoffs.clone();
    if let Some(k) = a.recall_k {
        opts.recall_k = k;
    }
    let report = evaluate_predictions(&ds, &preds, &opts).context("evaluating predictions")?;
    print!("{report}");
    if let Some(out) = &a.out {
        write_json(out, &report.to_json())?;
    }
    Ok(())
}
