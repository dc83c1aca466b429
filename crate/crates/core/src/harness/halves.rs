use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::ordering::{half_counts, OrderingSpec};

/// Mean dev perplexity of the five interleaved baselines.
pub const DEFAULT_THRESHOLD: f64 = 18.65;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredOrdering {
    pub ordering: OrderingSpec,
    /// Lower is better.
    pub metric: f64,
}

/// Mean sublayer counts in each half over one group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub count: usize,
    pub bottom_s: f64,
    pub bottom_f: f64,
    pub top_s: f64,
    pub top_f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfSplitReport {
    pub threshold: f64,
    /// Records with `metric < threshold`; `None` when there are none.
    pub better: Option<GroupStats>,
    pub worse: Option<GroupStats>,
}

impl HalfSplitReport {
    /// `better − worse` per field, when both groups exist.
    pub fn difference(&self) -> Option<GroupStats> {
        let (b, w) = (self.better?, self.worse?);
        Some(GroupStats {
            count: 0,
            bottom_s: b.bottom_s - w.bottom_s,
            bottom_f: b.bottom_f - w.bottom_f,
            top_s: b.top_s - w.top_s,
            top_f: b.top_f - w.top_f,
        })
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!("Threshold: {}\n\n| group | n | bottom s | bottom f | top s | top f |\n|---|---|---|---|---|---|\n", self.threshold);
        for (name, g) in [("better", self.better), ("worse", self.worse)] {
            match g {
                Some(g) => out += &format!(
                    "| {name} | {} | {:.3} | {:.3} | {:.3} | {:.3} |\n",
                    g.count, g.bottom_s, g.bottom_f, g.top_s, g.top_f
                ),
                None => out += &format!("| {name} | 0 | - | - | - | - |\n"),
            }
        }
        out
    }
}

fn stats(rows: &[&ScoredOrdering]) -> Option<GroupStats> {
    if rows.is_empty() {
        return None;
    }
    let mut sums = [0usize; 4];
    for r in rows {
        let h = half_counts(&r.ordering);
        for (s, v) in sums.iter_mut().zip([h.bottom_s, h.bottom_f, h.top_s, h.top_f]) {
            *s += v;
        }
    }
    let n = rows.len() as f64;
    Some(GroupStats {
        count: rows.len(),
        bottom_s: sums[0] as f64 / n,
        bottom_f: sums[1] as f64 / n,
        top_s: sums[2] as f64 / n,
        top_f: sums[3] as f64 / n,
    })
}

/// Splits records at `threshold` and averages half-split counts per group.
/// An empty group is reported as `None` rather than failing.
pub fn analyze_halves(records: &[ScoredOrdering], threshold: f64) -> Result<HalfSplitReport, HarnessError> {
    if records.len() < 2 {
        return Err(HarnessError::TooFewRecords {
            needed: 2,
            got: records.len(),
        });
    }
    let (better, worse): (Vec<&ScoredOrdering>, Vec<&ScoredOrdering>) = records.iter().partition(|r| r.metric < threshold);
    Ok(HalfSplitReport {
        threshold,
        better: stats(&better),
        worse: stats(&worse),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(o: &str, metric: f64) -> ScoredOrdering {
        ScoredOrdering {
            ordering: o.parse().unwrap(),
            metric,
        }
    }

    #[test]
    fn single_record_counts() {
        let r = analyze_halves(&[rec("ssssff", 1.0), rec("ssssff", 1.0)], 2.0).unwrap();
        let b = r.better.unwrap();
        assert_eq!((b.bottom_s, b.bottom_f, b.top_s, b.top_f), (4.0, 0.0, 0.0, 2.0));
        assert!(r.worse.is_none());
        assert!(r.difference().is_none());
    }

    #[test]
    fn identical_orderings_on_both_sides_differ_by_zero() {
        let r = analyze_halves(&[rec("sffsfs", 10.0), rec("sffsfs", 30.0)], 20.0).unwrap();
        assert_eq!(r.better.unwrap().count, 1);
        let d = r.difference().unwrap();
        assert_eq!((d.bottom_s, d.bottom_f, d.top_s, d.top_f), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn threshold_ties_count_as_worse() {
        let r = analyze_halves(&[rec("sf", 5.0), rec("fs", 4.0)], 5.0).unwrap();
        assert_eq!(r.better.unwrap().count, 1);
        assert_eq!(r.worse.unwrap().count, 1);
    }

    #[test]
    fn too_few() {
        assert!(analyze_halves(&[rec("sf", 1.0)], 2.0).is_err());
    }
}
