use std::collections::{BTreeMap, BTreeSet};

use num_traits::One;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{self, Exact};

use super::{CandidateBundle, Category, Decision};

/// Chance-corrected agreement between two raters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgreementReport {
    /// `None` when expected agreement is 1 and κ is undefined.
    pub kappa: Option<Exact>,
    pub observed_agreement: Exact,
    pub expected_agreement: Exact,
    pub n_items: usize,
}

impl AgreementReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "kappa": self.kappa.as_ref().map(|k| exact::round_decimal(k, 4)),
            "kappa_exact": self.kappa.as_ref().map(exact::to_fraction_string),
            "observed_agreement": exact::round_decimal(&self.observed_agreement, 4),
            "expected_agreement": exact::round_decimal(&self.expected_agreement, 4),
            "n_items": self.n_items,
        })
    }
}

/// Cohen's κ over index-aligned binary labels.
pub fn cohens_kappa(labels_a: &[bool], labels_b: &[bool]) -> Result<AgreementReport> {
    if labels_a.len() != labels_b.len() {
        return Err(Error::Contract(format!(
            "label vectors differ in length: {} vs {}",
            labels_a.len(),
            labels_b.len()
        )));
    }
    if labels_a.is_empty() {
        return Err(Error::Contract("no items to compare".into()));
    }
    let n = labels_a.len();
    let agree = labels_a.iter().zip(labels_b).filter(|(a, b)| a == b).count();
    let yes_a = labels_a.iter().filter(|&&x| x).count();
    let yes_b = labels_b.iter().filter(|&&x| x).count();
    let p_o = exact::ratio(agree, n);
    let p_e = exact::ratio(yes_a * yes_b + (n - yes_a) * (n - yes_b), n * n);
    let kappa = (!p_e.is_one()).then(|| (&p_o - &p_e) / (exact::one() - &p_e));
    Ok(AgreementReport {
        kappa,
        observed_agreement: p_o,
        expected_agreement: p_e,
        n_items: n,
    })
}

/// κ of an annotator against gold labels over the same items.
pub fn qualification_score(annotator_labels: &[bool], gold_labels: &[bool]) -> Result<AgreementReport> {
    cohens_kappa(annotator_labels, gold_labels)
}

/// κ between two annotators over the candidates both of them decided.
pub fn agreement_between(decisions: &[Decision], a: &str, b: &str) -> Result<AgreementReport> {
    let labels = |who: &str| -> BTreeMap<(&str, usize, usize), bool> {
        decisions
            .iter()
            .filter(|d| d.annotator_id == who)
            .map(|d| ((d.pair_id.as_str(), d.source_idx, d.target_idx), d.accepted))
            .collect()
    };
    let (la, lb) = (labels(a), labels(b));
    let (xs, ys): (Vec<bool>, Vec<bool>) = la
        .iter()
        .filter_map(|(k, &x)| lb.get(k).map(|&y| (x, y)))
        .unzip();
    cohens_kappa(&xs, &ys)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Rate {
    pub shown: usize,
    pub accepted: usize,
}

impl Rate {
    pub fn rate(&self) -> Option<Exact> {
        (self.shown > 0).then(|| exact::ratio(self.accepted, self.shown))
    }
}

pub type CategoryRates = BTreeMap<Category, Rate>;

/// Acceptance rates per provenance category under three conventions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AcceptanceBreakdown {
    /// Accepted only when every annotator accepted.
    pub unanimous: CategoryRates,
    /// Accepted when any annotator accepted.
    pub any: CategoryRates,
    /// Each annotator's own rates over the candidates they decided.
    pub per_annotator: BTreeMap<String, CategoryRates>,
}

fn rates_json(r: &CategoryRates) -> serde_json::Value {
    let mut m = serde_json::Map::new();
    for c in Category::ALL {
        let rate = r.get(&c).copied().unwrap_or_default();
        m.insert(
            c.as_str().to_string(),
            serde_json::json!({
                "shown": rate.shown,
                "accepted": rate.accepted,
                "rate": rate.rate().map(|x| crate::evaluate::percent(&x)),
            }),
        );
    }
    serde_json::Value::Object(m)
}

impl AcceptanceBreakdown {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "both_annotators": rates_json(&self.unanimous),
            "either_annotator": rates_json(&self.any),
            "per_annotator": self.per_annotator.iter().map(|(a, r)| (a.clone(), rates_json(r))).collect::<serde_json::Map<_, _>>(),
        })
    }
}

/// Acceptance per category for every candidate that received a decision.
///
/// Later decisions for the same key replace earlier ones.
pub fn acceptance_breakdown(decisions: &[Decision], bundles: &[CandidateBundle]) -> Result<AcceptanceBreakdown> {
    let mut category: BTreeMap<(&str, usize, usize), Category> = BTreeMap::new();
    for b in bundles {
        for c in &b.candidates {
            category.insert((&b.pair_id, b.source_idx, c.target_idx), c.provenance.category());
        }
    }
    let mut live: BTreeMap<(&str, usize, usize), BTreeMap<&str, bool>> = BTreeMap::new();
    for d in decisions {
        let key = (d.pair_id.as_str(), d.source_idx, d.target_idx);
        if !category.contains_key(&key) {
            return Err(Error::validation(format!(
                "decision by {} on {}/{}/{} matches no bundle candidate",
                d.annotator_id, d.pair_id, d.source_idx, d.target_idx
            )));
        }
        live.entry(key).or_default().insert(&d.annotator_id, d.accepted);
    }
    let annotators: BTreeSet<&str> = decisions.iter().map(|d| d.annotator_id.as_str()).collect();
    let mut out = AcceptanceBreakdown {
        unanimous: CategoryRates::new(),
        any: CategoryRates::new(),
        per_annotator: BTreeMap::new(),
    };
    for (key, votes) in &live {
        let cat = category[key];
        let all = annotators.iter().all(|a| votes.get(a).copied().unwrap_or(false));
        let some = votes.values().any(|&v| v);
        for (rates, hit) in [(&mut out.unanimous, all), (&mut out.any, some)] {
            let r = rates.entry(cat).or_default();
            r.shown += 1;
            r.accepted += usize::from(hit);
        }
        for (a, &v) in votes {
            let r = out.per_annotator.entry(a.to_string()).or_default().entry(cat).or_default();
            r.shown += 1;
            r.accepted += usize::from(v);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::{Candidate, Provenance};
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn table(yy: usize, nn: usize, yn: usize, ny: usize) -> (Vec<bool>, Vec<bool>) {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (n, x, y) in [(yy, true, true), (nn, false, false), (yn, true, false), (ny, false, true)] {
            a.extend(std::iter::repeat_n(x, n));
            b.extend(std::iter::repeat_n(y, n));
        }
        (a, b)
    }

    #[test]
    fn kappa_fixture() {
        let (a, b) = table(4, 4, 1, 1);
        let r = cohens_kappa(&a, &b).unwrap();
        assert_eq!(r.observed_agreement, exact::ratio(4, 5));
        assert_eq!(r.expected_agreement, exact::ratio(1, 2));
        assert_eq!(r.kappa, Some(exact::ratio(3, 5)));
    }

    #[test]
    fn kappa_bounds() {
        let (a, _) = table(3, 2, 0, 0);
        assert_eq!(cohens_kappa(&a, &a).unwrap().kappa, Some(exact::one()));
        let (a, b) = table(0, 0, 5, 5);
        assert_eq!(cohens_kappa(&a, &b).unwrap().kappa, Some(-exact::one()));
    }

    #[test]
    fn kappa_undefined_and_contract() {
        let all = vec![true; 4];
        let r = cohens_kappa(&all, &all).unwrap();
        assert_eq!(r.kappa, None);
        assert!(r.expected_agreement.is_one());
        assert!(matches!(cohens_kappa(&[true], &[true, false]), Err(Error::Contract(_))));
        assert!(matches!(cohens_kappa(&[], &[]), Err(Error::Contract(_))));
    }

    #[test]
    fn gold_self_agreement() {
        let (g, _) = table(2, 3, 0, 0);
        assert_eq!(qualification_score(&g, &g).unwrap().kappa, Some(exact::one()));
    }

    #[test]
    fn random_raters_average_zero_kappa() {
        let (gold, _) = table(50, 50, 0, 0);
        let mut sum = 0.0;
        let runs = 400;
        for seed in 0..runs {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let labels: Vec<bool> = (0..gold.len()).map(|_| rng.random_bool(0.5)).collect();
            sum += exact::to_f64(&qualification_score(&labels, &gold).unwrap().kappa.unwrap());
        }
        let mean = sum / runs as f64;
        // Standard error of the mean is about 0.005 here.
        assert!(mean.abs() < 0.02, "mean kappa {mean}");
    }

    fn bundle(cands: &[(usize, Provenance)]) -> CandidateBundle {
        CandidateBundle {
            pair_id: "p".into(),
            source_idx: 0,
            seed: 0,
            candidates: cands
                .iter()
                .map(|&(t, p)| Candidate {
                    target_idx: t,
                    provenance: p,
                })
                .collect(),
        }
    }

    fn decision(who: &str, t: usize, accepted: bool) -> Decision {
        Decision {
            annotator_id: who.into(),
            pair_id: "p".into(),
            source_idx: 0,
            target_idx: t,
            accepted,
            timestamp: Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap(),
        }
    }

    fn fixture() -> CandidateBundle {
        let both = Provenance::suggested(true, true).unwrap();
        bundle(&[
            (0, both),
            (1, both),
            (2, Provenance::suggested(true, false).unwrap()),
            (3, Provenance::suggested(false, true).unwrap()),
            (4, Provenance::RANDOM),
        ])
    }

    #[test]
    fn both_rate_fixture() {
        let ds = vec![
            decision("a", 0, true),
            decision("b", 0, true),
            decision("a", 1, true),
            decision("b", 1, false),
            decision("a", 4, false),
            decision("b", 4, false),
        ];
        let r = acceptance_breakdown(&ds, &[fixture()]).unwrap();
        assert_eq!(r.unanimous[&Category::Both], Rate { shown: 2, accepted: 1 });
        assert_eq!(r.unanimous[&Category::Both].rate(), Some(exact::ratio(1, 2)));
        assert_eq!(r.any[&Category::Both].accepted, 2);
        assert_eq!(r.per_annotator["b"][&Category::Both].accepted, 1);
        assert_eq!(r.unanimous[&Category::Random].rate(), Some(exact::zero()));
        let j = r.to_json();
        assert_eq!(j["both_annotators"]["both"]["rate"], "50.00");
        assert!(j["both_annotators"]["rllm-only"]["rate"].is_null());
    }

    #[test]
    fn all_rejected_means_zero_rates() {
        let ds: Vec<Decision> = (0..5).map(|t| decision("a", t, false)).collect();
        let r = acceptance_breakdown(&ds, &[fixture()]).unwrap();
        for c in Category::ALL {
            assert_eq!(r.unanimous[&c].rate(), Some(exact::zero()));
        }
        let shown: usize = r.unanimous.values().map(|x| x.shown).sum();
        assert_eq!(shown, 5);
    }

    #[test]
    fn orphan_decisions_are_rejected() {
        assert!(matches!(
            acceptance_breakdown(&[decision("a", 9, true)], &[fixture()]),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn later_decisions_win() {
        let ds = vec![decision("a", 0, false), decision("a", 0, true)];
        let r = acceptance_breakdown(&ds, &[fixture()]).unwrap();
        assert_eq!(r.unanimous[&Category::Both], Rate { shown: 1, accepted: 1 });
    }

    #[test]
    fn pairwise_agreement_from_decisions() {
        let mut ds = Vec::new();
        let (a, b) = table(4, 4, 1, 1);
        for (t, (x, y)) in a.iter().zip(&b).enumerate() {
            ds.push(decision("a", t, *x));
            ds.push(decision("b", t, *y));
        }
        ds.push(decision("a", 99, true));
        assert_eq!(agreement_between(&ds, "a", "b").unwrap().kappa, Some(exact::ratio(3, 5)));
    }

    fn labels() -> impl Strategy<Value = (Vec<bool>, Vec<bool>)> {
        (1usize..40).prop_flat_map(|n| (prop::collection::vec(any::<bool>(), n), prop::collection::vec(any::<bool>(), n)))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]
        #[test]
        fn kappa_symmetric_and_relabel_invariant((a, b) in labels()) {
            let ab = cohens_kappa(&a, &b).unwrap();
            let ba = cohens_kappa(&b, &a).unwrap();
            prop_assert_eq!(&ab, &ba);
            let na: Vec<bool> = a.iter().map(|x| !x).collect();
            let nb: Vec<bool> = b.iter().map(|x| !x).collect();
            prop_assert_eq!(&ab, &cohens_kappa(&na, &nb).unwrap());
            if let Some(k) = ab.kappa {
                prop_assert!(k >= -exact::one() && k <= exact::one());
            }
        }

        #[test]
        fn breakdown_partitions_shown(flags in prop::collection::vec(0u8..4, 1..12), accepts in prop::collection::vec(any::<bool>(), 12)) {
            let cands: Vec<(usize, Provenance)> = flags
                .iter()
                .enumerate()
                .map(|(t, f)| (t, match f {
                    0 => Provenance::RANDOM,
                    1 => Provenance::suggested(true, false).unwrap(),
                    2 => Provenance::suggested(false, true).unwrap(),
                    _ => Provenance::suggested(true, true).unwrap(),
                }))
                .collect();
            let ds: Vec<Decision> = (0..flags.len()).map(|t| decision("a", t, accepts[t])).collect();
            let r = acceptance_breakdown(&ds, &[bundle(&cands)]).unwrap();
            prop_assert_eq!(r.unanimous.values().map(|x| x.shown).sum::<usize>(), flags.len());
            let accepted: usize = accepts[..flags.len()].iter().filter(|&&x| x).count();
            prop_assert_eq!(r.unanimous.values().map(|x| x.accepted).sum::<usize>(), accepted);
        }
    }

    #[test]
    fn worse_than_chance_is_negative() {
        let k = cohens_kappa(&[true, false, true], &[true, true, false]).unwrap();
        assert!(k.kappa.unwrap() < exact::zero());
    }
}
