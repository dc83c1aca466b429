//! Published dev-set perplexities of random orderings and interleaved
//! baselines, transcribed into `data/published_orderings.jsonl`.

use serde::Deserialize;

use super::halves::ScoredOrdering;

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct FixtureRow {
    pub ordering: String,
    pub dev_ppl: f64,
    /// `permutation` (permutations of 16 `s` + 16 `f`) or `budgeted` (budgeted).
    pub source: String,
    pub baseline: bool,
}

const RAW: &str = include_str!("../../data/published_orderings.jsonl");

pub fn published_rows() -> Vec<FixtureRow> {
    RAW.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).expect("bundled fixture is valid"))
        .collect()
}

/// Non-baseline rows as analysis input.
pub fn published_random_models() -> Vec<ScoredOrdering> {
    published_rows()
        .into_iter()
        .filter(|r| !r.baseline)
        .map(|r| ScoredOrdering {
            ordering: r.ordering.parse().expect("fixture orderings parse"),
            metric: r.dev_ppl,
        })
        .collect()
}
