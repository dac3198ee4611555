use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{LabelId, Labeling};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LabelScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl LabelScores {
    pub fn from_precision_recall(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        LabelScores {
            precision,
            recall,
            f1,
        }
    }
}

/// Per-label scores of a result against a reference labeling, background excluded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegMetrics {
    pub labels: BTreeMap<LabelId, LabelScores>,
}

impl SegMetrics {
    pub fn get(&self, label: LabelId) -> Option<&LabelScores> {
        self.labels.get(&label)
    }

    pub fn min_f1(&self) -> f64 {
        self.labels.values().map(|s| s.f1).fold(f64::INFINITY, f64::min)
    }
}

/// Scores every non-background label present in either labeling. Labels
/// absent from `truth` get recall 0.
pub fn compute_metrics(result: &Labeling, truth: &Labeling) -> Result<SegMetrics> {
    if result.grid() != truth.grid() {
        return Err(Error::invalid(format!(
            "result dims {:?} do not match truth dims {:?}",
            result.grid().dims(),
            truth.grid().dims()
        )));
    }
    let background = truth.background();
    // (|result|, |truth|, |both|)
    let mut counts: BTreeMap<LabelId, (usize, usize, usize)> = BTreeMap::new();
    for &l in result.labels().iter().chain(truth.labels()) {
        if l != background {
            counts.entry(l).or_default();
        }
    }
    for (&r, &t) in result.assignment().iter().zip(truth.assignment()) {
        if r != background {
            counts.entry(r).or_default().0 += 1;
        }
        if t != background {
            let c = counts.entry(t).or_default();
            c.1 += 1;
            if r == t {
                c.2 += 1;
            }
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let labels = counts
        .into_iter()
        .map(|(l, (nr, nt, both))| {
            (l, LabelScores::from_precision_recall(ratio(both, nr), ratio(both, nt)))
        })
        .collect();
    Ok(SegMetrics { labels })
}
