//! Seeded synthetic inputs for the benchmarks.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use linkforge_core::evaluate::{prf_for_source, Prf};

const WORDS: [&str; 24] = [
    "model", "results", "section", "baseline", "dataset", "storm", "council", "budget", "river", "factory", "museum",
    "election", "the", "a", "of", "and", "in", "reported", "shows", "claims", "approach", "paper", "city", "new",
];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn sentence(rng: &mut impl Rng, min_words: usize, max_words: usize) -> String {
    let n = rng.random_range(min_words..=max_words);
    let words: Vec<&str> = (0..n).map(|_| *WORDS.choose(rng).expect("non-empty")).collect();
    let mut s = words.join(" ");
    s.push('.');
    s
}

pub fn sentences(seed: u64, n: usize) -> Vec<String> {
    let mut r = rng(seed);
    (0..n).map(|_| sentence(&mut r, 4, 18)).collect()
}

/// Running text of `n` sentences, some with abbreviations and decimals.
pub fn article(seed: u64, n: usize) -> String {
    let mut r = rng(seed);
    let mut out = String::new();
    for i in 0..n {
        let s = sentence(&mut r, 4, 18);
        match i % 7 {
            3 => out.push_str(&format!("Dr. Smith noted {s} ")),
            5 => out.push_str(&format!("Costs rose 3.5 percent, e.g. {s} ")),
            _ => {
                out.push_str(&s);
                out.push(' ');
            }
        }
    }
    out
}

/// Per-cutoff metric rows for `sources` random sources over `targets` targets.
pub fn metric_rows(seed: u64, sources: usize, targets: usize, cutoffs: &[usize]) -> Vec<Vec<Prf>> {
    let mut r = rng(seed);
    let instances: Vec<(Vec<usize>, std::collections::BTreeSet<usize>)> = (0..sources)
        .map(|_| {
            let mut ranking: Vec<usize> = (0..targets).collect();
            rand::seq::SliceRandom::shuffle(ranking.as_mut_slice(), &mut r);
            let mut gold: std::collections::BTreeSet<usize> =
                (0..targets).filter(|_| r.random_bool(0.1)).collect();
            gold.insert(r.random_range(0..targets));
            (ranking, gold)
        })
        .collect();
    cutoffs
        .iter()
        .map(|&k| {
            instances
                .iter()
                .map(|(ranking, gold)| prf_for_source(&ranking.iter().take(k).copied().collect(), gold))
                .collect()
        })
        .collect()
}

pub fn labels(seed: u64, n: usize, agreement: f64) -> (Vec<bool>, Vec<bool>) {
    let mut r = rng(seed);
    let a: Vec<bool> = (0..n).map(|_| r.random_bool(0.4)).collect();
    let b = a.iter().map(|&x| if r.random_bool(agreement) { x } else { !x }).collect();
    (a, b)
}
