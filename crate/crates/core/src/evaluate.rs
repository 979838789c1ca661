//! Precision, recall and F1 of predicted links against gold links.
//!
//! Metrics are computed per source sentence that has at least one gold link
//! and then macro-averaged. Everything stays exact until rendered.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::Serialize;

use crate::corpus::{LinkSet, LinkingDataset};
use crate::error::{Error, Result};
use crate::exact::{self, Exact};
use crate::predictions::{PredictionKind, Predictions};

pub const DEFAULT_CUTOFFS: [usize; 6] = [1, 3, 5, 7, 10, 20];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prf {
    pub precision: Exact,
    pub recall: Exact,
    pub f1: Exact,
}

impl Prf {
    pub fn new(precision: Exact, recall: Exact) -> Self {
        let f1 = exact::f1(&precision, &recall);
        Self { precision, recall, f1 }
    }

    fn zero() -> Self {
        Self::new(exact::zero(), exact::zero())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetricsAtK {
    pub k: usize,
    pub prf: Prf,
}

/// Metrics for one source sentence. `gold` must be non-empty.
pub fn prf_for_source(predicted: &BTreeSet<usize>, gold: &BTreeSet<usize>) -> Prf {
    debug_assert!(!gold.is_empty(), "sources without gold links are not scored");
    let hits = predicted.intersection(gold).count();
    let precision = if predicted.is_empty() {
        exact::zero()
    } else {
        exact::ratio(hits, predicted.len())
    };
    Prf::new(precision, exact::ratio(hits, gold.len()))
}

/// Component-wise mean of per-source metrics. The F1 is the mean of the
/// per-source F1 values, not the harmonic mean of the averages.
pub fn macro_average(rows: &[Prf]) -> Result<Prf> {
    if rows.is_empty() {
        return Err(Error::domain("no source sentence with gold links to average over"));
    }
    let n = BigInt::from(rows.len());
    let sum = |f: fn(&Prf) -> &Exact| rows.iter().map(f).fold(exact::zero(), |a, b| a + b) / n.clone();
    Ok(Prf {
        precision: sum(|r| &r.precision),
        recall: sum(|r| &r.recall),
        f1: sum(|r| &r.f1),
    })
}

/// Averages per-source metrics at each cutoff; `per_source[i]` belongs to `cutoffs[i]`.
pub fn aggregate_dataset(per_source: &[Vec<Prf>], cutoffs: &[usize]) -> Result<(Vec<MetricsAtK>, Exact)> {
    if per_source.len() != cutoffs.len() {
        return Err(Error::Contract(format!(
            "{} metric groups for {} cutoffs",
            per_source.len(),
            cutoffs.len()
        )));
    }
    if cutoffs.is_empty() {
        return Err(Error::domain("no cutoffs to aggregate"));
    }
    let per_cutoff = per_source
        .iter()
        .zip(cutoffs)
        .map(|(rows, &k)| Ok(MetricsAtK { k, prf: macro_average(rows)? }))
        .collect::<Result<Vec<_>>>()?;
    let avg_f1 = exact::mean(per_cutoff.iter().map(|m| &m.prf.f1)).expect("non-empty");
    Ok((per_cutoff, avg_f1))
}

/// Mean of per-dataset average F1 scores.
pub fn overall_average(per_dataset_avg_f1: &[Exact]) -> Result<Exact> {
    exact::mean(per_dataset_avg_f1).ok_or_else(|| Error::domain("no datasets to average"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalOptions {
    pub cutoffs: Vec<usize>,
    /// Cutoff for the separately reported recall column.
    pub recall_k: usize,
}

impl EvalOptions {
    pub fn for_domain(domain: crate::corpus::Domain) -> Self {
        Self {
            cutoffs: DEFAULT_CUTOFFS.to_vec(),
            recall_k: crate::refine::default_k(domain),
        }
    }
}

/// Scores of one eligible source sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceRow {
    pub pair_id: String,
    pub source_idx: usize,
    pub gold: BTreeSet<usize>,
    /// `(k, metrics)`; `k` is `None` for binary predictions.
    pub metrics: Vec<(Option<usize>, Prf)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalReport {
    pub dataset: String,
    pub method: String,
    pub kind: PredictionKind,
    pub sources: usize,
    /// Source sentences without gold links, left out of every average.
    pub excluded_sources: usize,
    pub per_cutoff: Vec<MetricsAtK>,
    pub avg_f1: Option<Exact>,
    pub recall_at_fixed: Option<(usize, Exact)>,
    /// Set for link predictions, which have no cutoff.
    pub binary: Option<Prf>,
    pub per_source: Vec<SourceRow>,
}

/// Scores a prediction file against the gold links of `ds`.
///
/// Pairs or sources without predictions count as empty predictions.
pub fn evaluate_predictions(ds: &LinkingDataset, preds: &Predictions, opts: &EvalOptions) -> Result<EvalReport> {
    for id in preds.records.keys() {
        if ds.get(id).is_none() {
            return Err(Error::validation(format!("predictions for unknown pair {id}")));
        }
    }
    let kinds: BTreeSet<PredictionKind> = preds.records.values().map(|r| r.kind).collect();
    if kinds.len() > 1 {
        return Err(Error::validation("prediction file mixes ranked and link records"));
    }
    let kind = kinds.into_iter().next().unwrap_or(PredictionKind::Ranked);
    let methods: BTreeSet<&str> = preds.records.values().map(|r| r.method.as_str()).collect();
    let method = methods.into_iter().collect::<Vec<_>>().join(",");

    let mut cutoffs = opts.cutoffs.clone();
    cutoffs.sort_unstable();
    cutoffs.dedup();
    if kind == PredictionKind::Ranked && (cutoffs.is_empty() || cutoffs[0] == 0) {
        return Err(Error::Config("cutoffs must be positive and non-empty".into()));
    }
    let mut scored_ks: Vec<usize> = cutoffs.clone();
    if !scored_ks.contains(&opts.recall_k) {
        scored_ks.push(opts.recall_k);
    }

    let mut rows = Vec::new();
    let mut excluded = 0;
    for lp in &ds.pairs {
        let record = preds.get(lp.pair_id());
        if record.is_none() {
            log::warn!("no predictions for pair {}", lp.pair_id());
        }
        for s in 0..lp.pair.source.len() {
            let gold = lp.links.targets_of(s);
            if gold.is_empty() {
                excluded += 1;
                continue;
            }
            let ranking = record.and_then(|r| r.ranking(s));
            let predicted_at = |k: usize| -> BTreeSet<usize> { ranking.map(|r| r.top(k).collect()).unwrap_or_default() };
            let metrics = match kind {
                PredictionKind::Ranked => scored_ks
                    .iter()
                    .map(|&k| (Some(k), prf_for_source(&predicted_at(k), &gold)))
                    .collect(),
                PredictionKind::Links => vec![(None, prf_for_source(&predicted_at(usize::MAX), &gold))],
            };
            rows.push(SourceRow {
                pair_id: lp.pair_id().to_string(),
                source_idx: s,
                gold,
                metrics,
            });
        }
    }

    let column = |i: usize| -> Vec<Prf> { rows.iter().map(|r| r.metrics[i].1.clone()).collect() };
    let mut report = EvalReport {
        dataset: ds.name.clone(),
        method,
        kind,
        sources: rows.len(),
        excluded_sources: excluded,
        per_cutoff: Vec::new(),
        avg_f1: None,
        recall_at_fixed: None,
        binary: None,
        per_source: Vec::new(),
    };
    match kind {
        PredictionKind::Ranked => {
            let groups: Vec<Vec<Prf>> = (0..cutoffs.len()).map(column).collect();
            let (per_cutoff, avg) = aggregate_dataset(&groups, &cutoffs)?;
            let ri = scored_ks.iter().position(|&k| k == opts.recall_k).expect("added above");
            report.recall_at_fixed = Some((opts.recall_k, macro_average(&column(ri))?.recall));
            report.per_cutoff = per_cutoff;
            report.avg_f1 = Some(avg);
        }
        PredictionKind::Links => report.binary = Some(macro_average(&column(0))?),
    }
    report.per_source = rows;
    Ok(report)
}

/// Gold links for sources whose every target was judged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExhaustiveGold {
    pub links: LinkSet,
    pub labeled_sources: BTreeSet<usize>,
}

/// Macro P/R/F1 of each method over the exhaustively labeled sources.
///
/// Labeled sources without any gold link have no defined recall and are
/// skipped. Predictions for unlabeled sources are ignored with a warning.
pub fn true_recall_report(
    predictions: &BTreeMap<String, Vec<LinkSet>>,
    gold: &[ExhaustiveGold],
) -> Result<BTreeMap<String, Prf>> {
    let gold_by_pair: BTreeMap<&str, &ExhaustiveGold> = gold.iter().map(|g| (g.links.pair_id.as_str(), g)).collect();
    let mut out = BTreeMap::new();
    for (method, sets) in predictions {
        let mut predicted: BTreeMap<(&str, usize), BTreeSet<usize>> = BTreeMap::new();
        for set in sets {
            for &(s, t) in &set.links {
                let labeled = gold_by_pair
                    .get(set.pair_id.as_str())
                    .is_some_and(|g| g.labeled_sources.contains(&s));
                if labeled {
                    predicted.entry((set.pair_id.as_str(), s)).or_default().insert(t);
                } else {
                    log::warn!("{method}: ignoring link ({s}, {t}) of pair {} outside the labeled subset", set.pair_id);
                }
            }
        }
        let mut rows = Vec::new();
        for g in gold {
            for &s in &g.labeled_sources {
                let gold_targets = g.links.targets_of(s);
                if gold_targets.is_empty() {
                    continue;
                }
                let empty = BTreeSet::new();
                let p = predicted.get(&(g.links.pair_id.as_str(), s)).unwrap_or(&empty);
                rows.push(prf_for_source(p, &gold_targets));
            }
        }
        out.insert(method.clone(), if rows.is_empty() { Prf::zero() } else { macro_average(&rows)? });
    }
    Ok(out)
}

/// Percentage with two decimals, e.g. `0.4` → `"40.00"`.
pub fn percent(value: &Exact) -> String {
    exact::round_decimal(&(value * BigRational::from_integer(BigInt::from(100))), 2)
}

#[derive(Serialize)]
struct PrfJson {
    precision: String,
    recall: String,
    f1: String,
    exact: ExactJson,
}

#[derive(Serialize)]
struct ExactJson {
    precision: String,
    recall: String,
    f1: String,
}

impl From<&Prf> for PrfJson {
    fn from(p: &Prf) -> Self {
        Self {
            precision: percent(&p.precision),
            recall: percent(&p.recall),
            f1: percent(&p.f1),
            exact: ExactJson {
                precision: exact::to_fraction_string(&p.precision),
                recall: exact::to_fraction_string(&p.recall),
                f1: exact::to_fraction_string(&p.f1),
            },
        }
    }
}

#[derive(Serialize)]
struct CutoffJson {
    k: usize,
    #[serde(flatten)]
    prf: PrfJson,
}

#[derive(Serialize)]
struct RecallJson {
    k: usize,
    recall: String,
    exact: String,
}

#[derive(Serialize)]
struct SourceJson<'a> {
    pair_id: &'a str,
    source_idx: usize,
    gold: &'a BTreeSet<usize>,
    metrics: Vec<SourceMetricJson>,
}

#[derive(Serialize)]
struct SourceMetricJson {
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    precision: String,
    recall: String,
    f1: String,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    dataset: &'a str,
    method: &'a str,
    kind: PredictionKind,
    sources: usize,
    excluded_sources: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    per_cutoff: Vec<CutoffJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    avg_f1: Option<PrfScalar>,
    #[serde(skip_serializing_if = "Option::is_none")]
    recall_at: Option<RecallJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    binary: Option<PrfJson>,
    per_source: Vec<SourceJson<'a>>,
}

#[derive(Serialize)]
struct PrfScalar {
    value: String,
    exact: String,
}

impl EvalReport {
    /// Machine-readable report: percentages with two decimals next to the
    /// exact fractions, plus per-source rows with exact fractions.
    pub fn to_json(&self) -> serde_json::Value {
        let view = ReportJson {
            dataset: &self.dataset,
            method: &self.method,
            kind: self.kind,
            sources: self.sources,
            excluded_sources: self.excluded_sources,
            per_cutoff: self
                .per_cutoff
                .iter()
                .map(|m| CutoffJson {
                    k: m.k,
                    prf: (&m.prf).into(),
                })
                .collect(),
            avg_f1: self.avg_f1.as_ref().map(|a| PrfScalar {
                value: percent(a),
                exact: exact::to_fraction_string(a),
            }),
            recall_at: self.recall_at_fixed.as_ref().map(|(k, r)| RecallJson {
                k: *k,
                recall: percent(r),
                exact: exact::to_fraction_string(r),
            }),
            binary: self.binary.as_ref().map(Into::into),
            per_source: self
                .per_source
                .iter()
                .map(|r| SourceJson {
                    pair_id: &r.pair_id,
                    source_idx: r.source_idx,
                    gold: &r.gold,
                    metrics: r
                        .metrics
                        .iter()
                        .map(|(k, p)| SourceMetricJson {
                            k: *k,
                            precision: exact::to_fraction_string(&p.precision),
                            recall: exact::to_fraction_string(&p.recall),
                            f1: exact::to_fraction_string(&p.f1),
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_value(view).expect("report serializes")
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} on {}: {} sources scored, {} without gold links",
            self.method, self.dataset, self.sources, self.excluded_sources
        )?;
        if let Some(b) = &self.binary {
            writeln!(f, "{:>8} {:>8} {:>8}", "P", "R", "F1")?;
            return writeln!(f, "{:>8} {:>8} {:>8}", percent(&b.precision), percent(&b.recall), percent(&b.f1));
        }
        writeln!(f, "{:>4} {:>8} {:>8} {:>8}", "k", "P", "R", "F1")?;
        for m in &self.per_cutoff {
            writeln!(
                f,
                "{:>4} {:>8} {:>8} {:>8}",
                m.k,
                percent(&m.prf.precision),
                percent(&m.prf.recall),
                percent(&m.prf.f1)
            )?;
        }
        if let Some(a) = &self.avg_f1 {
            writeln!(f, "Avg. F1 {}", percent(a))?;
        }
        if let Some((k, r)) = &self.recall_at_fixed {
            writeln!(f, "R@{k} {}", percent(r))?;
        }
        Ok(())
    }
}
