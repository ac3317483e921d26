//! Classification metrics, data-dynamics indicators and group extraction.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{burstiness, gaps, TemporalBipartiteGraph, TimeWindowing, SECONDS_PER_DAY};
use crate::linalg::mean;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn new(tp: usize, tn: usize, fp: usize, fn_: usize) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    /// Counts from 0/1 labels and 0/1 predictions.
    pub fn from_predictions(labels: &[u8], predicted: &[u8]) -> Self {
        let mut c = Self::default();
        for (&y, &p) in labels.iter().zip(predicted) {
            match (y, p) {
                (1, 1) => c.tp += 1,
                (1, _) => c.fn_ += 1,
                (_, 1) => c.fp += 1,
                _ => c.tn += 1,
            }
        }
        c
    }

    /// Predicts positive when `score ≥ threshold`.
    pub fn at_threshold(scores: &[f64], labels: &[u8], threshold: f64) -> Self {
        let predicted: Vec<u8> = scores.iter().map(|&s| u8::from(s >= threshold)).collect();
        Self::from_predictions(labels, &predicted)
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

pub fn accuracy(c: &ConfusionCounts) -> Result<f64> {
    if c.total() == 0 {
        return Err(Error::UndefinedMetric("accuracy of an empty evaluation set"));
    }
    Ok((c.tp + c.tn) as f64 / c.total() as f64)
}

pub fn recall(c: &ConfusionCounts) -> Result<f64> {
    if c.tp + c.fn_ == 0 {
        return Err(Error::UndefinedMetric("recall without positives"));
    }
    Ok(c.tp as f64 / (c.tp + c.fn_) as f64)
}

fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Mean of per-class F1 from `(precision, recall)` pairs.
pub fn f1_from_parts(per_class: &[(f64, f64)]) -> f64 {
    per_class.iter().map(|&(p, r)| f1(p, r)).sum::<f64>() / per_class.len() as f64
}

pub fn f1_macro(c: &ConfusionCounts) -> Result<f64> {
    if c.tp + c.fn_ == 0 || c.tn + c.fp == 0 {
        return Err(Error::SingleClass);
    }
    let ratio = |a: usize, b: usize| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
    let positive = (ratio(c.tp, c.fp), ratio(c.tp, c.fn_));
    let negative = (ratio(c.tn, c.fn_), ratio(c.tn, c.fp));
    Ok(f1_from_parts(&[positive, negative]))
}

/// Mann–Whitney AUROC with midranks for ties.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            got: scores.len(),
        });
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64 * midrank;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Accuracy, recall, macro-F1 at a threshold plus threshold-free AUROC.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub accuracy: f64,
    pub recall: f64,
    pub f1_macro: f64,
    pub auroc: f64,
}

pub fn evaluate(scores: &[f64], labels: &[u8], threshold: f64) -> Result<Scores> {
    let c = ConfusionCounts::at_threshold(scores, labels, threshold);
    Ok(Scores {
        accuracy: accuracy(&c)?,
        recall: recall(&c)?,
        f1_macro: f1_macro(&c)?,
        auroc: auroc(scores, labels)?,
    })
}

// ---------------------------------------------------------------------------
// Dynamics

/// Raw per-window indicators; churn and turnover are undefined for the first
/// window, burstiness for windows with fewer than two events.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowDynamics {
    pub window: usize,
    pub arrival_rate: f64,
    pub churn: Option<f64>,
    pub turnover: Option<f64>,
    pub burstiness: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Components {
    pub arrival_rate: f64,
    pub churn: f64,
    pub turnover: f64,
    pub burstiness: f64,
}

impl Components {
    pub fn as_array(&self) -> [f64; 4] {
        [self.arrival_rate, self.churn, self.turnover, self.burstiness]
    }

    fn from_array(a: [f64; 4]) -> Self {
        Self {
            arrival_rate: a[0],
            churn: a[1],
            turnover: a[2],
            burstiness: a[3],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsReport {
    pub windows: Vec<WindowDynamics>,
    pub averaged: Components,
    /// Min-max normalised across compared datasets; all 0.5 when the
    /// report stands alone.
    pub normalized: Components,
    pub composite: f64,
    /// False when normalisation had no second dataset to compare with.
    pub cross_normalized: bool,
}

/// Composite index: the plain mean of the four normalised components.
pub fn composite_index(normalized: [f64; 4]) -> f64 {
    normalized.iter().sum::<f64>() / 4.0
}

fn jaccard_distance<T: Eq + std::hash::Hash>(a: &HashSet<T>, b: &HashSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        0.0
    } else {
        1.0 - a.intersection(b).count() as f64 / union as f64
    }
}

fn mean_defined(xs: impl Iterator<Item = Option<f64>>) -> f64 {
    let v: Vec<f64> = xs.flatten().collect();
    if v.is_empty() {
        0.0
    } else {
        mean(&v)
    }
}

/// Per-window indicators and their averages for one dataset.
pub fn dynamics(g: &TemporalBipartiteGraph, windowing: &TimeWindowing) -> Result<DynamicsReport> {
    if windowing.window_count() < 2 {
        return Err(Error::InvalidArgument("dynamics needs at least two windows".into()));
    }
    let mut windows = Vec::new();
    let mut prev: Option<(HashSet<usize>, HashSet<(usize, usize)>)> = None;
    for (w, reviews) in windowing.assign(g).into_iter().enumerate() {
        let days = (windowing.boundaries[w + 1] - windowing.boundaries[w]) / SECONDS_PER_DAY as f64;
        let active: HashSet<usize> = reviews.iter().map(|&k| g.reviews()[k].reviewer).collect();
        let pairs: HashSet<(usize, usize)> = reviews
            .iter()
            .map(|&k| (g.reviews()[k].reviewer, g.reviews()[k].product))
            .collect();
        let mut times: Vec<i64> = reviews.iter().map(|&k| g.reviews()[k].timestamp).collect();
        times.sort_unstable();
        let (churn, turnover) = match &prev {
            Some((pa, pp)) => (Some(jaccard_distance(&active, pa)), Some(jaccard_distance(&pairs, pp))),
            None => (None, None),
        };
        windows.push(WindowDynamics {
            window: w,
            arrival_rate: reviews.len() as f64 / days.max(f64::MIN_POSITIVE),
            churn,
            turnover,
            burstiness: if times.len() >= 2 { burstiness(&gaps(&times)) } else { None },
        });
        prev = Some((active, pairs));
    }
    let averaged = Components {
        arrival_rate: mean_defined(windows.iter().map(|w| Some(w.arrival_rate))),
        churn: mean_defined(windows.iter().map(|w| w.churn)),
        turnover: mean_defined(windows.iter().map(|w| w.turnover)),
        burstiness: mean_defined(windows.iter().map(|w| w.burstiness)),
    };
    let normalized = Components::from_array([0.5; 4]);
    Ok(DynamicsReport {
        windows,
        averaged,
        composite: composite_index(normalized.as_array()),
        normalized,
        cross_normalized: false,
    })
}

/// Min-max normalises each component across `reports` and recomputes the
/// composite. A single report, or a component equal everywhere, gets 0.5.
pub fn normalize_across(reports: &mut [DynamicsReport]) {
    let multi = reports.len() >= 2;
    let mut lo = [f64::INFINITY; 4];
    let mut hi = [f64::NEG_INFINITY; 4];
    for r in reports.iter() {
        for (i, v) in r.averaged.as_array().iter().enumerate() {
            lo[i] = lo[i].min(*v);
            hi[i] = hi[i].max(*v);
        }
    }
    for r in reports.iter_mut() {
        let raw = r.averaged.as_array();
        let mut n = [0.5; 4];
        for i in 0..4 {
            if multi && hi[i] > lo[i] {
                n[i] = (raw[i] - lo[i]) / (hi[i] - lo[i]);
            }
        }
        r.normalized = Components::from_array(n);
        r.composite = composite_index(n);
        r.cross_normalized = multi;
    }
}

// ---------------------------------------------------------------------------
// Groups

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Group {
    /// Reviewer indices, ascending.
    pub members: Vec<usize>,
    pub mean_score: f64,
    pub flagged: bool,
}

/// Connected components (size ≥ 2) of the co-review projection among
/// suspicious reviewers; a group is flagged when its mean score reaches
/// `min_spam`. Groups are ordered by their smallest member.
pub fn extract_groups(g: &TemporalBipartiteGraph, suspicious: &[bool], scores: &[f64], min_spam: f64) -> Vec<Group> {
    let m = g.num_reviewers();
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for p in 0..g.num_products() {
        let mut first: Option<usize> = None;
        for &r in g.neighbors(g.product_node(p)) {
            if !suspicious[r] {
                continue;
            }
            match first {
                None => first = Some(r),
                Some(f) => {
                    let (a, b) = (find(&mut parent, f), find(&mut parent, r));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
    }
    let mut comps: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for r in (0..m).filter(|&r| suspicious[r]) {
        let root = find(&mut parent, r);
        comps.entry(root).or_default().insert(r);
    }
    let mut groups: Vec<Group> = comps
        .into_values()
        .filter(|c| c.len() >= 2)
        .map(|c| {
            let members: Vec<usize> = c.into_iter().collect();
            let mean_score = members.iter().map(|&r| scores[r]).sum::<f64>() / members.len() as f64;
            Group {
                flagged: mean_score >= min_spam,
                members,
                mean_score,
            }
        })
        .collect();
    groups.sort_by_key(|gr| gr.members[0]);
    groups
}

// ---------------------------------------------------------------------------
// Reports

/// One line of an evaluation table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub variant: String,
    pub split: String,
    pub accuracy: f64,
    pub recall: f64,
    pub f1_macro: f64,
    pub auroc: f64,
}

impl MetricRow {
    pub fn new(variant: &str, split: &str, s: &Scores) -> Self {
        Self {
            variant: variant.to_string(),
            split: split.to_string(),
            accuracy: s.accuracy,
            recall: s.recall,
            f1_macro: s.f1_macro,
            auroc: s.auroc,
        }
    }
}

pub fn write_report_csv<W: std::io::Write>(rows: &[MetricRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn format_table(rows: &[MetricRow]) -> String {
    let mut s = format!(
        "{:<14} {:<8} {:>9} {:>9} {:>9} {:>9}\n",
        "variant", "split", "accuracy", "recall", "f1_macro", "auroc"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<14} {:<8} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            r.variant, r.split, r.accuracy, r.recall, r.f1_macro, r.auroc
        );
    }
    s
}
