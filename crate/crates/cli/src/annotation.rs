use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Deserialize;
use serde_json::{json, Value};

use linkforge_core::annotate::{
    acceptance_breakdown, agreement_between, assemble_dataset, import_records, load_bundles, qualification_score,
    save_bundles, write_records, AnnotationRecord, BundleConfig, ExportFilter,
};
use linkforge_core::corpus::load_dataset;
use linkforge_core::predictions::load_predictions;
use linkforge_core::{Decision, Domain};
use linkforge_service::{Session, SessionConfig};

use crate::io::{read_jsonl, write_json};
use crate::DomainArg;

#[derive(Debug, Args)]
pub struct AssembleArgs {
    /// Refined (model-accepted) predictions.
    #[arg(long)]
    pub rllm: PathBuf,
    /// Retriever rankings.
    #[arg(long)]
    pub retr: PathBuf,
    /// Bundle composition preset.
    #[arg(long, value_enum)]
    pub cfg: DomainArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Dataset for eligibility filtering and target counts.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
}

pub fn assemble(a: &AssembleArgs) -> Result<()> {
    let rllm = load_predictions(&a.rllm)?;
    let retr = load_predictions(&a.retr)?;
    let ds = a.dataset.as_ref().map(load_dataset).transpose()?;
    let cfg = BundleConfig::for_domain(Domain::from(a.cfg));
    let bundles = assemble_dataset(&rllm, &retr, ds.as_ref(), cfg, a.seed)?;
    save_bundles(&bundles, &a.out)?;
    let n: usize = bundles.iter().map(|b| b.candidates.len()).sum();
    eprintln!("assembled {} bundles with {n} candidates into {}", bundles.len(), a.out.display());
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DecisionLine {
    Record(AnnotationRecord),
    Single(Decision),
}

/// Reads decisions from a decision log or an export file. Later lines
/// replace earlier ones for the same key.
fn load_decisions(path: &std::path::Path) -> Result<Vec<Decision>> {
    let lines: Vec<DecisionLine> = read_jsonl(path)?;
    let mut live: BTreeMap<(String, String, usize, usize), Decision> = BTreeMap::new();
    for line in lines {
        let ds = match line {
            DecisionLine::Record(r) => import_records(std::slice::from_ref(&r)),
            DecisionLine::Single(d) => vec![d],
        };
        for d in ds {
            live.insert(
                (d.annotator_id.clone(), d.pair_id.clone(), d.source_idx, d.target_idx),
                d,
            );
        }
    }
    Ok(live.into_values().collect())
}

#[derive(Debug, Deserialize)]
struct GoldLabel {
    pair_id: String,
    source_idx: usize,
    target_idx: usize,
    accepted: bool,
}

#[derive(Debug, Args)]
pub struct AgreeArgs {
    /// Decision log or export file.
    #[arg(long)]
    pub decisions: PathBuf,
    /// Reference labels `{pair_id, source_idx, target_idx, accepted}` for
    /// qualification scores.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Bundle file, for acceptance rates per candidate origin.
    #[arg(long)]
    pub bundles: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn agree(a: &AgreeArgs) -> Result<()> {
    let decisions = load_decisions(&a.decisions)?;
    let annotators: BTreeSet<&str> = decisions.iter().map(|d| d.annotator_id.as_str()).collect();
    let mut report = serde_json::Map::new();
    report.insert("annotators".into(), json!(annotators));

    let mut pairs = Vec::new();
    let ids: Vec<&str> = annotators.iter().copied().collect();
    for (i, x) in ids.iter().enumerate() {
        for y in &ids[i + 1..] {
            let entry = match agreement_between(&decisions, x, y) {
                Ok(r) => r.to_json(),
                Err(e) => json!({ "error": e.to_string() }),
            };
            pairs.push(json!({ "a": x, "b": y, "agreement": entry }));
        }
    }
    report.insert("pairwise".into(), Value::Array(pairs));

    if let Some(gold_path) = &a.gold {
        let gold: BTreeMap<(String, usize, usize), bool> = read_jsonl::<GoldLabel>(gold_path)?
            .into_iter()
            .map(|g| ((g.pair_id, g.source_idx, g.target_idx), g.accepted))
            .collect();
        let mut scored = Vec::new();
        for who in &ids {
            let (mine, reference): (Vec<bool>, Vec<bool>) = decisions
                .iter()
                .filter(|d| d.annotator_id == *who)
                .filter_map(|d| {
                    gold.get(&(d.pair_id.clone(), d.source_idx, d.target_idx))
                        .map(|&g| (d.accepted, g))
                })
                .unzip();
            match qualification_score(&mine, &reference) {
                Ok(r) => scored.push((who.to_string(), r)),
                Err(e) => log::warn!("no qualification score for {who}: {e}"),
            }
        }
        scored.sort_by(|x, y| y.1.kappa.cmp(&x.1.kappa).then_with(|| x.0.cmp(&y.0)));
        let rows: Vec<Value> = scored
            .iter()
            .map(|(who, r)| json!({ "annotator": who, "agreement": r.to_json() }))
            .collect();
        report.insert("qualification".into(), Value::Array(rows));
    }

    if let Some(bundle_path) = &a.bundles {
        let bundles = load_bundles(bundle_path)?;
        let breakdown = acceptance_breakdown(&decisions, &bundles)?;
        report.insert("acceptance".into(), breakdown.to_json());
    }

    let report = Value::Object(report);
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub bundles: PathBuf,
    /// Decision log; created when missing.
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    /// Annotator token; repeat for several annotators.
    #[arg(long = "annotator")]
    pub annotators: Vec<String>,
    /// File with one annotator token per line.
    #[arg(long)]
    pub annotators_file: Option<PathBuf>,
    /// Dataset providing document text for each task.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
}

fn session_config(
    bundles: &std::path::Path,
    store: &std::path::Path,
    tokens: BTreeSet<String>,
    dataset: Option<&PathBuf>,
) -> Result<SessionConfig> {
    Ok(SessionConfig {
        bundles: load_bundles(bundles)?,
        store: store.to_path_buf(),
        annotators: tokens,
        dataset: dataset.map(load_dataset).transpose()?,
    })
}

pub fn serve(a: &ServeArgs) -> Result<()> {
    let mut tokens: BTreeSet<String> = a.annotators.iter().cloned().collect();
    if let Some(p) = &a.annotators_file {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        tokens.extend(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from));
    }
    if tokens.is_empty() {
        bail!("no annotator tokens: pass --annotator or --annotators-file");
    }
    let session = Arc::new(Session::open(session_config(
        &a.bundles,
        &a.store,
        tokens,
        a.dataset.as_ref(),
    )?)?);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&a.addr)
            .await
            .with_context(|| format!("binding {}", a.addr))?;
        eprintln!("serving on http://{}", listener.local_addr()?);
        linkforge_service::serve(listener, session, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        Ok(())
    })
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub bundles: PathBuf,
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub annotator: Option<String>,
    #[arg(long)]
    pub pair_id: Option<String>,
}

/// Offline export straight from a decision log.
pub fn export(a: &ExportArgs) -> Result<()> {
    if !a.store.exists() {
        bail!("decision log {} does not exist", a.store.display());
    }
    let bundles = load_bundles(&a.bundles)?;
    let decisions = load_decisions(&a.store)?;
    let filter = ExportFilter {
        annotator: a.annotator.clone(),
        pair_id: a.pair_id.clone(),
    };
    let records = linkforge_core::annotate::export_records(&bundles, &decisions, &filter);
    write_records(&records, std::io::stdout().lock())?;
    Ok(())
}
