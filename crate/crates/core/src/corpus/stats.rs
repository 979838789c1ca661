use std::fmt;

use super::LinkingDataset;
use crate::error::{Error, Result};
use crate::exact::{self, Exact};

/// Corpus statistics. Averages are per document pair and kept exact.
///
/// `avg_links_src` / `avg_links_tgt` count distinct source / target sentences
/// taking part in at least one link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetStats {
    pub n_pairs: usize,
    pub n_links: usize,
    pub avg_sents_src: Exact,
    pub avg_sents_tgt: Exact,
    pub avg_links_src: Exact,
    pub avg_links_tgt: Exact,
}

pub fn compute_stats(ds: &LinkingDataset) -> Result<DatasetStats> {
    if ds.is_empty() {
        return Err(Error::domain("statistics of an empty dataset"));
    }
    let n = ds.len();
    let sum = |f: &dyn Fn(&super::LinkedPair) -> usize| ds.pairs.iter().map(f).sum::<usize>();
    Ok(DatasetStats {
        n_pairs: n,
        n_links: sum(&|p| p.links.len()),
        avg_sents_src: exact::ratio(sum(&|p| p.pair.source.len()), n),
        avg_sents_tgt: exact::ratio(sum(&|p| p.pair.target.len()), n),
        avg_links_src: exact::ratio(sum(&|p| p.links.sources().len()), n),
        avg_links_tgt: exact::ratio(sum(&|p| p.links.targets().len()), n),
    })
}

impl DatasetStats {
    /// JSON view with values rounded to two decimals plus exact fractions.
    pub fn to_json(&self) -> serde_json::Value {
        let r = |v: &Exact| exact::round_decimal(v, 2);
        let f = exact::to_fraction_string;
        serde_json::json!({
            "n_pairs": self.n_pairs,
            "n_links": self.n_links,
            "avg_sents_src": r(&self.avg_sents_src),
            "avg_sents_tgt": r(&self.avg_sents_tgt),
            "avg_links_src": r(&self.avg_links_src),
            "avg_links_tgt": r(&self.avg_links_tgt),
            "exact": {
                "avg_sents_src": f(&self.avg_sents_src),
                "avg_sents_tgt": f(&self.avg_sents_tgt),
                "avg_links_src": f(&self.avg_links_src),
                "avg_links_tgt": f(&self.avg_links_tgt),
            }
        })
    }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = |v: &Exact| exact::round_decimal(v, 2);
        writeln!(f, "Doc Pairs         {}", self.n_pairs)?;
        writeln!(f, "Number of Links   {}", self.n_links)?;
        writeln!(f, "Avg. Sents (Src)  {}", r(&self.avg_sents_src))?;
        writeln!(f, "Avg. Sents (Tgt)  {}", r(&self.avg_sents_tgt))?;
        writeln!(f, "Avg. Links (Src)  {}", r(&self.avg_links_src))?;
        write!(f, "Avg. Links (Tgt)  {}", r(&self.avg_links_tgt))
    }
}
