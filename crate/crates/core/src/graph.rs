//! Dynamic reviewer–product graph: ingestion, preprocessing, snapshots,
//! time windows, ego-networks and raw node features.
//!
//! Nodes share one index space: reviewers occupy `0..M` and products
//! `M..M+N`. Reviews are kept sorted by `(timestamp, reviewer, product)`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{mean, std_dev, Matrix};

pub const SECONDS_PER_DAY: i64 = 86_400;

/// One review as it appears in the input stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReviewEvent {
    pub reviewer_id: String,
    pub product_id: String,
    pub timestamp: i64,
    pub rating: f64,
    pub content_len: u32,
}

impl ReviewEvent {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.reviewer_id.is_empty() || self.product_id.is_empty() {
            return Err("empty identifier".into());
        }
        if self.timestamp < 0 {
            return Err(format!("negative timestamp {}", self.timestamp));
        }
        if !(1.0..=5.0).contains(&self.rating) {
            return Err(format!("rating {} outside [1,5]", self.rating));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Reviewer,
    Product,
}

/// A review edge with resolved endpoint indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Review {
    pub reviewer: usize,
    pub product: usize,
    pub timestamp: i64,
    pub rating: f64,
    pub content_len: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct GraphData {
    reviewers: Vec<String>,
    products: Vec<String>,
    reviews: Vec<Review>,
}

/// Reviewer–product bipartite multigraph with timestamped review edges.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(from = "GraphData", into = "GraphData")]
pub struct TemporalBipartiteGraph {
    reviewers: Vec<String>,
    products: Vec<String>,
    reviews: Vec<Review>,
    reviewer_lookup: HashMap<String, usize>,
    product_lookup: HashMap<String, usize>,
    // review indices incident to each unified node
    incident: Vec<Vec<usize>>,
    // distinct neighbours in unified index space, sorted
    adjacency: Vec<Vec<usize>>,
}

impl PartialEq for TemporalBipartiteGraph {
    fn eq(&self, other: &Self) -> bool {
        self.reviewers == other.reviewers
            && self.products == other.products
            && self.reviews == other.reviews
    }
}

impl From<GraphData> for TemporalBipartiteGraph {
    fn from(d: GraphData) -> Self {
        Self::from_parts(d.reviewers, d.products, d.reviews)
    }
}

impl From<TemporalBipartiteGraph> for GraphData {
    fn from(g: TemporalBipartiteGraph) -> Self {
        GraphData {
            reviewers: g.reviewers,
            products: g.products,
            reviews: g.reviews,
        }
    }
}

impl TemporalBipartiteGraph {
    /// Builds a graph from events. Node sets are the sorted distinct ids;
    /// exact duplicate events are dropped.
    pub fn from_events(events: &[ReviewEvent]) -> Self {
        let reviewers: BTreeSet<&str> = events.iter().map(|e| e.reviewer_id.as_str()).collect();
        let products: BTreeSet<&str> = events.iter().map(|e| e.product_id.as_str()).collect();
        let reviewers: Vec<String> = reviewers.into_iter().map(str::to_owned).collect();
        let products: Vec<String> = products.into_iter().map(str::to_owned).collect();
        let rl: HashMap<&str, usize> = reviewers
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let pl: HashMap<&str, usize> = products
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let mut seen = HashSet::new();
        let mut reviews = Vec::with_capacity(events.len());
        for e in events {
            let key = (
                e.reviewer_id.as_str(),
                e.product_id.as_str(),
                e.timestamp,
                e.rating.to_bits(),
                e.content_len,
            );
            if !seen.insert(key) {
                continue;
            }
            reviews.push(Review {
                reviewer: rl[e.reviewer_id.as_str()],
                product: pl[e.product_id.as_str()],
                timestamp: e.timestamp,
                rating: e.rating,
                content_len: e.content_len,
            });
        }
        Self::from_parts(reviewers, products, reviews)
    }

    /// Assembles a graph from already-resolved parts. Reviews are sorted.
    pub fn from_parts(reviewers: Vec<String>, products: Vec<String>, mut reviews: Vec<Review>) -> Self {
        let m = reviewers.len();
        for r in &reviews {
            assert!(r.reviewer < m, "review references unknown reviewer");
            assert!(r.product < products.len(), "review references unknown product");
        }
        reviews.sort_by(|a, b| {
            (a.timestamp, a.reviewer, a.product)
                .cmp(&(b.timestamp, b.reviewer, b.product))
                .then(a.rating.total_cmp(&b.rating))
                .then(a.content_len.cmp(&b.content_len))
        });
        let n = m + products.len();
        let mut incident = vec![Vec::new(); n];
        let mut adjacency: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for (k, r) in reviews.iter().enumerate() {
            let p = m + r.product;
            incident[r.reviewer].push(k);
            incident[p].push(k);
            adjacency[r.reviewer].insert(p);
            adjacency[p].insert(r.reviewer);
        }
        let reviewer_lookup = reviewers.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        let product_lookup = products.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        Self {
            reviewers,
            products,
            reviews,
            reviewer_lookup,
            product_lookup,
            incident,
            adjacency: adjacency.into_iter().map(|s| s.into_iter().collect()).collect(),
        }
    }

    pub fn num_reviewers(&self) -> usize {
        self.reviewers.len()
    }

    pub fn num_products(&self) -> usize {
        self.products.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.reviewers.len() + self.products.len()
    }

    pub fn reviews(&self) -> &[Review] {
        &self.reviews
    }

    pub fn reviewer_ids(&self) -> &[String] {
        &self.reviewers
    }

    pub fn product_ids(&self) -> &[String] {
        &self.products
    }

    pub fn reviewer_index(&self, id: &str) -> Option<usize> {
        self.reviewer_lookup.get(id).copied()
    }

    pub fn product_index(&self, id: &str) -> Option<usize> {
        self.product_lookup.get(id).copied()
    }

    /// Unified node index of a product.
    pub fn product_node(&self, product: usize) -> usize {
        self.reviewers.len() + product
    }

    pub fn kind(&self, node: usize) -> NodeKind {
        if node < self.reviewers.len() {
            NodeKind::Reviewer
        } else {
            NodeKind::Product
        }
    }

    /// Identifier of a unified node, prefixed by its kind is not applied.
    pub fn node_name(&self, node: usize) -> &str {
        match self.kind(node) {
            NodeKind::Reviewer => &self.reviewers[node],
            NodeKind::Product => &self.products[node - self.reviewers.len()],
        }
    }

    /// Resolves `r:<id>`, `p:<id>` or a bare id (reviewers first).
    pub fn lookup(&self, name: &str) -> Result<usize> {
        if let Some(id) = name.strip_prefix("r:") {
            return self.reviewer_index(id).ok_or_else(|| Error::UnknownNode(name.into()));
        }
        if let Some(id) = name.strip_prefix("p:") {
            return self
                .product_index(id)
                .map(|p| self.product_node(p))
                .ok_or_else(|| Error::UnknownNode(name.into()));
        }
        self.reviewer_index(name)
            .or_else(|| self.product_index(name).map(|p| self.product_node(p)))
            .ok_or_else(|| Error::UnknownNode(name.into()))
    }

    /// Distinct neighbours of a unified node, sorted.
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    /// Number of distinct neighbours.
    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    /// Number of reviews touching the node.
    pub fn review_count(&self, node: usize) -> usize {
        self.incident[node].len()
    }

    pub fn incident_reviews(&self, node: usize) -> &[usize] {
        &self.incident[node]
    }

    /// Number of distinct reviewer–product pairs.
    pub fn num_distinct_edges(&self) -> usize {
        self.adjacency[..self.reviewers.len()].iter().map(Vec::len).sum()
    }

    pub fn time_range(&self) -> Option<(i64, i64)> {
        Some((self.reviews.first()?.timestamp, self.reviews.last()?.timestamp))
    }

    /// Checks the bipartite and endpoint invariants.
    pub fn check_invariants(&self) -> Result<()> {
        let m = self.reviewers.len();
        for (v, nbrs) in self.adjacency.iter().enumerate() {
            for &u in nbrs {
                if (v < m) == (u < m) {
                    return Err(Error::InvalidArgument(format!(
                        "non-bipartite edge between {v} and {u}"
                    )));
                }
            }
        }
        if self.reviews.windows(2).any(|w| w[0].timestamp > w[1].timestamp) {
            return Err(Error::InvalidArgument("reviews not time-sorted".into()));
        }
        Ok(())
    }

    pub fn events(&self) -> Vec<ReviewEvent> {
        self.reviews
            .iter()
            .map(|r| ReviewEvent {
                reviewer_id: self.reviewers[r.reviewer].clone(),
                product_id: self.products[r.product].clone(),
                timestamp: r.timestamp,
                rating: r.rating,
                content_len: r.content_len,
            })
            .collect()
    }

    /// Subgraph induced by a set of unified nodes (nodes kept even when
    /// isolated). Returns the subgraph and the old→new unified index map.
    pub fn induced(&self, nodes: &BTreeSet<usize>) -> (TemporalBipartiteGraph, HashMap<usize, usize>) {
        let m = self.reviewers.len();
        let rev: Vec<usize> = nodes.iter().copied().filter(|&v| v < m).collect();
        let prod: Vec<usize> = nodes.iter().copied().filter(|&v| v >= m).collect();
        let rmap: HashMap<usize, usize> = rev.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let pmap: HashMap<usize, usize> = prod.iter().enumerate().map(|(i, &v)| (v - m, i)).collect();
        let reviews = self
            .reviews
            .iter()
            .filter_map(|r| {
                Some(Review {
                    reviewer: *rmap.get(&r.reviewer)?,
                    product: *pmap.get(&r.product)?,
                    ..r.clone()
                })
            })
            .collect();
        let sub = TemporalBipartiteGraph::from_parts(
            rev.iter().map(|&v| self.reviewers[v].clone()).collect(),
            prod.iter().map(|&v| self.products[v - m].clone()).collect(),
            reviews,
        );
        let new_m = rev.len();
        let mut map: HashMap<usize, usize> = rmap;
        for (&p, &i) in &pmap {
            map.insert(p + m, new_m + i);
        }
        (sub, map)
    }
}

// ---------------------------------------------------------------------------
// Ingestion

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Jsonl,
    Csv,
}

impl std::str::FromStr for InputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(Self::Jsonl),
            "csv" => Ok(Self::Csv),
            other => Err(Error::InvalidArgument(format!("unknown format {other}"))),
        }
    }
}

/// Unit of the timestamp column; day-granular input is scaled to seconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    #[default]
    Seconds,
    Days,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub records: usize,
    pub skipped: usize,
    pub duplicates: usize,
    pub reviewers: usize,
    pub products: usize,
    pub reviews: usize,
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    reviewer_id: Option<String>,
    product_id: Option<String>,
    timestamp: Option<i64>,
    rating: Option<f64>,
    content_len: Option<u64>,
}

impl RawRecord {
    fn into_event(self, unit: TimeUnit) -> Option<ReviewEvent> {
        let timestamp = match unit {
            TimeUnit::Seconds => self.timestamp?,
            TimeUnit::Days => self.timestamp?.checked_mul(SECONDS_PER_DAY)?,
        };
        let ev = ReviewEvent {
            reviewer_id: self.reviewer_id?,
            product_id: self.product_id?,
            timestamp,
            rating: self.rating.unwrap_or(3.0),
            content_len: u32::try_from(self.content_len.unwrap_or(0)).ok()?,
        };
        ev.validate().ok()?;
        Some(ev)
    }
}

/// Reads review records, skipping malformed ones. Fails only when no
/// valid record remains.
pub fn ingest<R: Read>(
    source: R,
    format: InputFormat,
    unit: TimeUnit,
) -> Result<(TemporalBipartiteGraph, IngestReport)> {
    let mut report = IngestReport::default();
    let mut events = Vec::new();
    match format {
        InputFormat::Jsonl => {
            for line in BufReader::new(source).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                report.records += 1;
                match serde_json::from_str::<RawRecord>(&line)
                    .ok()
                    .and_then(|r| r.into_event(unit))
                {
                    Some(ev) => events.push(ev),
                    None => report.skipped += 1,
                }
            }
        }
        InputFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new()
                .has_headers(true)
                .flexible(true)
                .trim(csv::Trim::All)
                .from_reader(source);
            for rec in rdr.deserialize::<RawRecord>() {
                report.records += 1;
                match rec.ok().and_then(|r| r.into_event(unit)) {
                    Some(ev) => events.push(ev),
                    None => report.skipped += 1,
                }
            }
        }
    }
    if events.is_empty() {
        return Err(Error::Ingest(format!(
            "no valid records ({} read, {} malformed)",
            report.records, report.skipped
        )));
    }
    let g = TemporalBipartiteGraph::from_events(&events);
    report.duplicates = events.len() - g.reviews().len();
    report.reviewers = g.num_reviewers();
    report.products = g.num_products();
    report.reviews = g.reviews().len();
    Ok((g, report))
}

/// Iteratively drops reviewers and products with fewer than `min_reviews`
/// reviews until no such node remains.
pub fn preprocess(g: &TemporalBipartiteGraph, min_reviews: usize) -> Result<TemporalBipartiteGraph> {
    if min_reviews == 0 {
        return Err(Error::InvalidArgument("min_reviews must be >= 1".into()));
    }
    let m = g.num_reviewers();
    let mut alive: Vec<bool> = vec![true; g.reviews().len()];
    loop {
        let mut count = vec![0usize; g.num_nodes()];
        for (k, r) in g.reviews().iter().enumerate() {
            if alive[k] {
                count[r.reviewer] += 1;
                count[m + r.product] += 1;
            }
        }
        let mut changed = false;
        for (k, r) in g.reviews().iter().enumerate() {
            if alive[k] && (count[r.reviewer] < min_reviews || count[m + r.product] < min_reviews) {
                alive[k] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let nodes: BTreeSet<usize> = g
        .reviews()
        .iter()
        .zip(&alive)
        .filter(|(_, &a)| a)
        .flat_map(|(r, _)| [r.reviewer, m + r.product])
        .collect();
    if nodes.is_empty() {
        return Err(Error::EmptyGraph { min_reviews });
    }
    Ok(g.induced(&nodes).0)
}

// ---------------------------------------------------------------------------
// Snapshots and windows

/// Binary reviewer×product incidence of all reviews strictly before `at_time`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Snapshot {
    pub at_time: i64,
    pub entries: BTreeSet<(usize, usize)>,
}

impl Snapshot {
    pub fn get(&self, reviewer: usize, product: usize) -> u8 {
        u8::from(self.entries.contains(&(reviewer, product)))
    }
}

pub fn snapshot(g: &TemporalBipartiteGraph, t: i64) -> Snapshot {
    let end = g.reviews().partition_point(|r| r.timestamp < t);
    Snapshot {
        at_time: t,
        entries: g.reviews()[..end].iter().map(|r| (r.reviewer, r.product)).collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowSpec {
    /// Split the span into this many equal-width windows.
    Count(usize),
    /// Windows of this many seconds; the last one may be shorter.
    Duration(i64),
}

/// Half-open windows `[b[m], b[m+1])`; the last window also holds the
/// right boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeWindowing {
    pub boundaries: Vec<f64>,
}

impl TimeWindowing {
    pub fn window_count(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn window_of(&self, t: i64) -> Option<usize> {
        let t = t as f64;
        let first = *self.boundaries.first()?;
        let last = *self.boundaries.last()?;
        if t < first || t > last {
            return None;
        }
        if t == last {
            return Some(self.window_count() - 1);
        }
        Some(self.boundaries.partition_point(|&b| b <= t) - 1)
    }

    /// Review indices grouped by window.
    pub fn assign(&self, g: &TemporalBipartiteGraph) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.window_count()];
        for (k, r) in g.reviews().iter().enumerate() {
            if let Some(w) = self.window_of(r.timestamp) {
                out[w].push(k);
            }
        }
        out
    }
}

pub fn make_windows(g: &TemporalBipartiteGraph, spec: WindowSpec) -> Result<TimeWindowing> {
    let (lo, hi) = g
        .time_range()
        .ok_or_else(|| Error::InvalidArgument("graph has no reviews".into()))?;
    windows_over(lo, hi, spec)
}

pub fn windows_over(lo: i64, hi: i64, spec: WindowSpec) -> Result<TimeWindowing> {
    if lo == hi {
        return Ok(TimeWindowing {
            boundaries: vec![lo as f64, lo as f64 + 1.0],
        });
    }
    let span = (hi - lo) as f64;
    let boundaries = match spec {
        WindowSpec::Count(count) => {
            if count == 0 {
                return Err(Error::InvalidArgument("window count must be >= 1".into()));
            }
            (0..=count)
                .map(|m| if m == count { hi as f64 } else { lo as f64 + span * m as f64 / count as f64 })
                .collect()
        }
        WindowSpec::Duration(tau) => {
            if tau <= 0 {
                return Err(Error::InvalidArgument("window length must be > 0".into()));
            }
            let mut b = Vec::new();
            let mut t = lo;
            while t < hi {
                b.push(t as f64);
                t += tau;
            }
            b.push(hi as f64);
            b
        }
    };
    Ok(TimeWindowing { boundaries })
}

// ---------------------------------------------------------------------------
// Ego networks

#[derive(Clone, Debug)]
pub struct EgoNetwork {
    pub graph: TemporalBipartiteGraph,
    /// Unified index of the centre inside `graph`.
    pub center: usize,
}

/// Unified node ids within `hops` of `v` (breadth-first).
pub fn ball(g: &TemporalBipartiteGraph, v: usize, hops: usize) -> BTreeSet<usize> {
    let mut seen = BTreeSet::from([v]);
    let mut frontier = VecDeque::from([(v, 0usize)]);
    while let Some((x, d)) = frontier.pop_front() {
        if d == hops {
            continue;
        }
        for &u in g.neighbors(x) {
            if seen.insert(u) {
                frontier.push_back((u, d + 1));
            }
        }
    }
    seen
}

pub fn ego_network(g: &TemporalBipartiteGraph, v: usize, hops: usize) -> Result<EgoNetwork> {
    if v >= g.num_nodes() {
        return Err(Error::UnknownNode(format!("#{v}")));
    }
    if !(1..=2).contains(&hops) {
        return Err(Error::InvalidArgument(format!("hops must be 1 or 2, got {hops}")));
    }
    let nodes = ball(g, v, hops);
    let (graph, map) = g.induced(&nodes);
    Ok(EgoNetwork {
        graph,
        center: map[&v],
    })
}

// ---------------------------------------------------------------------------
// Raw features

pub const REVIEWER_FEATURES: [&str; 6] = [
    "degree",
    "mean_rating",
    "rating_std",
    "mean_gap_days",
    "burstiness",
    "mean_content_len",
];
pub const PRODUCT_FEATURES: [&str; 4] = ["degree", "mean_rating", "rating_entropy", "reviews_per_day"];

/// Reviewer columns that depend on time.
pub const REVIEWER_TEMPORAL: [usize; 2] = [3, 4];
/// Product columns that depend on time.
pub const PRODUCT_TEMPORAL: [usize; 1] = [3];

/// Node feature matrices: unscaled values and their z-scored counterparts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawFeatures {
    pub reviewer_unscaled: Matrix,
    pub product_unscaled: Matrix,
    pub reviewer: Matrix,
    pub product: Matrix,
}

/// `(σ − μ)/(σ + μ)` of the gaps; `None` without gaps or when σ + μ = 0.
pub fn burstiness(gaps: &[f64]) -> Option<f64> {
    if gaps.is_empty() {
        return None;
    }
    let mu = mean(gaps);
    let sigma = std_dev(gaps);
    if sigma + mu <= 0.0 {
        return None;
    }
    Some((sigma - mu) / (sigma + mu))
}

pub fn gaps(times: &[i64]) -> Vec<f64> {
    times.windows(2).map(|w| (w[1] - w[0]) as f64).collect()
}

fn rating_entropy(ratings: &[f64]) -> f64 {
    let mut bins = [0usize; 5];
    for r in ratings {
        let b = (r.round() as i64).clamp(1, 5) as usize - 1;
        bins[b] += 1;
    }
    let n = ratings.len() as f64;
    bins.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

fn zscore_columns(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for c in 0..m.cols {
        let col = m.column(c);
        let mu = mean(&col);
        let sd = std_dev(&col);
        for r in 0..m.rows {
            let v = if sd < 1e-12 { 0.0 } else { (col[r] - mu) / sd };
            out.set(r, c, v);
        }
    }
    out
}

pub fn raw_features(g: &TemporalBipartiteGraph) -> RawFeatures {
    let m = g.num_reviewers();
    let mut rev = Matrix::zeros(m, REVIEWER_FEATURES.len());
    for i in 0..m {
        let idx = g.incident_reviews(i);
        let ratings: Vec<f64> = idx.iter().map(|&k| g.reviews()[k].rating).collect();
        let times: Vec<i64> = idx.iter().map(|&k| g.reviews()[k].timestamp).collect();
        let lens: Vec<f64> = idx.iter().map(|&k| g.reviews()[k].content_len as f64).collect();
        let gap = gaps(&times);
        let row = rev.row_mut(i);
        row[0] = idx.len() as f64;
        row[1] = mean(&ratings);
        row[2] = std_dev(&ratings);
        row[3] = mean(&gap) / SECONDS_PER_DAY as f64;
        row[4] = burstiness(&gap).unwrap_or(0.0);
        row[5] = mean(&lens);
    }
    let n = g.num_products();
    let mut prod = Matrix::zeros(n, PRODUCT_FEATURES.len());
    for j in 0..n {
        let idx = g.incident_reviews(m + j);
        let ratings: Vec<f64> = idx.iter().map(|&k| g.reviews()[k].rating).collect();
        let row = prod.row_mut(j);
        row[0] = idx.len() as f64;
        row[1] = mean(&ratings);
        row[2] = if ratings.is_empty() { 0.0 } else { rating_entropy(&ratings) };
        if let (Some(&first), Some(&last)) = (idx.first(), idx.last()) {
            let days = (g.reviews()[last].timestamp - g.reviews()[first].timestamp) as f64
                / SECONDS_PER_DAY as f64;
            row[3] = idx.len() as f64 / days.max(1.0);
        }
    }
    RawFeatures {
        reviewer: zscore_columns(&rev),
        product: zscore_columns(&prod),
        reviewer_unscaled: rev,
        product_unscaled: prod,
    }
}

/// Per-product review counts keyed by product id, in product order.
pub fn product_review_counts(g: &TemporalBipartiteGraph) -> BTreeMap<String, usize> {
    (0..g.num_products())
        .map(|j| (g.product_ids()[j].clone(), g.review_count(g.product_node(j))))
        .collect()
}
