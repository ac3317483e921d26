//! Time-windowed importance sampling and cluster pooling.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{TemporalBipartiteGraph, TimeWindowing};
use crate::linalg::{cosine, Matrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImportanceWeights {
    /// Node importance weights for (S_norm, relative degree, clustering).
    pub alpha: [f64; 3],
    /// Edge importance weights for (edge weight, cosine similarity).
    pub beta: [f64; 2],
    /// Absolute node threshold; `None` uses the window median of `I_v`.
    pub theta: Option<f64>,
    pub delta: f64,
}

impl Default for ImportanceWeights {
    fn default() -> Self {
        Self {
            alpha: [0.5, 0.3, 0.2],
            beta: [0.5, 0.5],
            theta: None,
            delta: 0.3,
        }
    }
}

impl ImportanceWeights {
    pub fn validate(&self) -> Result<()> {
        let sa: f64 = self.alpha.iter().sum();
        let sb: f64 = self.beta.iter().sum();
        if (sa - 1.0).abs() > 1e-9 || self.alpha.iter().any(|&a| a < 0.0) {
            return Err(Error::Config(format!("alpha weights must be a simplex (sum = {sa})")));
        }
        if (sb - 1.0).abs() > 1e-9 || self.beta.iter().any(|&b| b < 0.0) {
            return Err(Error::Config(format!("beta weights must be a simplex (sum = {sb})")));
        }
        if let Some(t) = self.theta {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config("theta must lie in [0,1]".into()));
            }
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::Config("delta must lie in [0,1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoolConfig {
    pub weights: ImportanceWeights,
    pub max_sample: usize,
    /// Cluster cap is `max(1, ceil(|V'| / cluster_divisor))`.
    pub cluster_divisor: usize,
    pub max_sweeps: usize,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            weights: ImportanceWeights::default(),
            max_sample: 1000,
            cluster_divisor: 8,
            max_sweeps: 20,
        }
    }
}

impl PoolConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.max_sample == 0 || self.cluster_divisor == 0 || self.max_sweeps == 0 {
            return Err(Error::Config("pool sizes must be positive".into()));
        }
        Ok(())
    }
}

pub fn node_importance(s_norm: f64, degree: f64, max_degree: f64, clustering: f64, w: &ImportanceWeights) -> f64 {
    let rel = if max_degree > 0.0 { degree / max_degree } else { 0.0 };
    w.alpha[0] * s_norm + w.alpha[1] * rel + w.alpha[2] * clustering
}

pub fn edge_importance(w_uv: f64, h_u: &[f64], h_v: &[f64], w: &ImportanceWeights) -> f64 {
    w.beta[0] * w_uv + w.beta[1] * cosine(h_u, h_v)
}

/// Linear-interpolated median.
pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Positions (into `importances`) kept by the threshold rule, ascending.
pub fn sample_nodes(importances: &[f64], theta: f64, max_sample: usize) -> Vec<usize> {
    if importances.is_empty() {
        return Vec::new();
    }
    let mut kept: Vec<usize> = (0..importances.len()).filter(|&i| importances[i] >= theta).collect();
    if kept.is_empty() {
        let best = (0..importances.len())
            .max_by(|&a, &b| importances[a].total_cmp(&importances[b]).then(b.cmp(&a)))
            .unwrap_or(0);
        return vec![best];
    }
    if kept.len() > max_sample {
        kept.sort_by(|&a, &b| importances[b].total_cmp(&importances[a]).then(a.cmp(&b)));
        kept.truncate(max_sample);
        kept.sort_unstable();
    }
    kept
}

/// Edges whose endpoints are both sampled.
pub fn induce_edges(edges: &[(usize, usize, f64)], sampled: &[usize]) -> Vec<(usize, usize, f64)> {
    let set: std::collections::HashSet<usize> = sampled.iter().copied().collect();
    edges
        .iter()
        .copied()
        .filter(|(u, v, _)| set.contains(u) && set.contains(v))
        .collect()
}

/// Activity of one window: nodes (global indices), distinct edges with
/// review multiplicity as weight, and each node's mean timestamp.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSlice {
    pub window: usize,
    pub nodes: Vec<usize>,
    pub edges: Vec<(usize, usize, f64)>,
    pub times: Vec<f64>,
}

impl WindowSlice {
    pub fn degree(&self) -> Vec<f64> {
        let pos: HashMap<usize, usize> = self.nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut d = vec![0.0; self.nodes.len()];
        for &(u, v, _) in &self.edges {
            d[pos[&u]] += 1.0;
            d[pos[&v]] += 1.0;
        }
        d
    }
}

pub fn window_slices(g: &TemporalBipartiteGraph, windowing: &TimeWindowing) -> Vec<WindowSlice> {
    windowing
        .assign(g)
        .into_iter()
        .enumerate()
        .map(|(w, reviews)| {
            let mut edges: BTreeMap<(usize, usize), f64> = BTreeMap::new();
            let mut times: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
            for k in reviews {
                let r = &g.reviews()[k];
                let p = g.product_node(r.product);
                *edges.entry((r.reviewer, p)).or_default() += 1.0;
                for v in [r.reviewer, p] {
                    let e = times.entry(v).or_default();
                    e.0 += r.timestamp as f64;
                    e.1 += 1.0;
                }
            }
            WindowSlice {
                window: w,
                nodes: times.keys().copied().collect(),
                times: times.values().map(|(s, c)| s / c).collect(),
                edges: edges.into_iter().map(|((u, v), c)| (u, v, c)).collect(),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Supernode {
    pub window: usize,
    /// Global node indices of the members, ascending.
    pub members: Vec<usize>,
    /// Member importances `I_v`.
    pub importances: Vec<f64>,
    /// Pooled representation `Σ I_v h_v / Σ I_v`.
    pub h: Vec<f64>,
}

impl Supernode {
    /// Convex pooling weights; uniform when every importance is zero.
    pub fn pool_weights(&self) -> Vec<f64> {
        let total: f64 = self.importances.iter().sum();
        if total > 0.0 {
            self.importances.iter().map(|i| i / total).collect()
        } else {
            vec![1.0 / self.members.len() as f64; self.members.len()]
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Superedge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PooledGraph {
    pub supernodes: Vec<Supernode>,
    pub superedges: Vec<Superedge>,
}

impl PooledGraph {
    pub fn num_supernodes(&self) -> usize {
        self.supernodes.len()
    }

    pub fn name(&self, k: usize) -> String {
        let s = &self.supernodes[k];
        let local = self.supernodes[..k].iter().filter(|o| o.window == s.window).count();
        format!("w{}:c{}", s.window, local)
    }

    /// Supernode holding `node` in `window`, if it was sampled there.
    pub fn locate(&self, window: usize, node: usize) -> Option<usize> {
        self.supernodes
            .iter()
            .position(|s| s.window == window && s.members.binary_search(&node).is_ok())
    }

    /// For every global node, the supernodes it belongs to (any window).
    pub fn membership(&self, num_nodes: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); num_nodes];
        for (k, s) in self.supernodes.iter().enumerate() {
            for &m in &s.members {
                out[m].push(k);
            }
        }
        out
    }

    pub fn write_csvs<W1: std::io::Write, W2: std::io::Write>(&self, nodes: W1, edges: W2) -> Result<()> {
        let mut w = csv::Writer::from_writer(nodes);
        let dim = self.supernodes.first().map_or(0, |s| s.h.len());
        let mut header = vec!["supernode".to_string(), "window".into(), "size".into()];
        header.extend((0..dim).map(|i| format!("h{i}")));
        w.write_record(&header)?;
        for k in 0..self.supernodes.len() {
            let s = &self.supernodes[k];
            let mut rec = vec![self.name(k), s.window.to_string(), s.members.len().to_string()];
            rec.extend(s.h.iter().map(|x| x.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_writer(edges);
        w.write_record(["source", "target", "weight"])?;
        for e in &self.superedges {
            w.write_record([self.name(e.a), self.name(e.b), e.weight.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Asynchronous label propagation in index order over a weighted graph.
/// Ties prefer the current label, then the smallest label.
pub fn label_propagation(n: usize, edges: &[(usize, usize, f64)], max_sweeps: usize) -> Vec<usize> {
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for &(u, v, w) in edges {
        adj[u].push((v, w));
        adj[v].push((u, w));
    }
    let mut label: Vec<usize> = (0..n).collect();
    for _ in 0..max_sweeps {
        let mut changed = false;
        for v in 0..n {
            if adj[v].is_empty() {
                continue;
            }
            let mut score: BTreeMap<usize, f64> = BTreeMap::new();
            for &(u, w) in &adj[v] {
                *score.entry(label[u]).or_default() += w;
            }
            let best = score.values().copied().fold(f64::NEG_INFINITY, f64::max);
            let cur = label[v];
            let pick = if score.get(&cur).is_some_and(|&s| s >= best - 1e-12) {
                cur
            } else {
                *score.iter().find(|(_, &s)| s >= best - 1e-12).map(|(l, _)| l).unwrap_or(&cur)
            };
            if pick != cur {
                label[v] = pick;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    compact_labels(&label)
}

/// Relabels to `0..c` in order of first appearance.
fn compact_labels(label: &[usize]) -> Vec<usize> {
    let mut map = HashMap::new();
    label
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// Merges the smallest connected cluster into its most strongly connected
/// neighbour until at most `k` clusters remain or no cluster has
/// neighbours.
fn cap_clusters(label: &mut [usize], edges: &[(usize, usize, f64)], k: usize) {
    loop {
        let count = label.iter().copied().max().map_or(0, |m| m + 1);
        if count <= k {
            return;
        }
        let mut size = vec![0usize; count];
        for &l in label.iter() {
            size[l] += 1;
        }
        let mut links: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(u, v, w) in edges {
            let (a, b) = (label[u], label[v]);
            if a != b {
                *links.entry((a, b)).or_default() += w;
                *links.entry((b, a)).or_default() += w;
            }
        }
        let candidate = (0..count)
            .filter(|&c| links.range((c, 0)..(c + 1, 0)).next().is_some())
            .min_by_key(|&c| (size[c], c));
        let Some(c) = candidate else { return };
        let target = links
            .range((c, 0)..(c + 1, 0))
            .max_by(|x, y| x.1.total_cmp(y.1).then(y.0 .1.cmp(&x.0 .1)))
            .map(|((_, t), _)| *t)
            .expect("candidate has a neighbour");
        for l in label.iter_mut() {
            if *l == c {
                *l = target;
            }
        }
        let compact = compact_labels(label);
        label.copy_from_slice(&compact);
    }
}

/// Pools one window's sampled subgraph. `h` rows align with `nodes`;
/// `edges` carry `I_e` as weight and index into `nodes` positions.
pub fn cluster_pool(
    window: usize,
    nodes: &[usize],
    h: &Matrix,
    importances: &[f64],
    edges: &[(usize, usize, f64)],
    k: usize,
    max_sweeps: usize,
) -> PooledGraph {
    let mut label = label_propagation(nodes.len(), edges, max_sweeps);
    cap_clusters(&mut label, edges, k.max(1));
    let count = label.iter().copied().max().map_or(0, |m| m + 1);
    let mut supernodes: Vec<Supernode> = (0..count)
        .map(|_| Supernode {
            window,
            members: Vec::new(),
            importances: Vec::new(),
            h: vec![0.0; h.cols],
        })
        .collect();
    let mut order: Vec<usize> = (0..nodes.len()).collect();
    order.sort_by_key(|&i| nodes[i]);
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); count];
    for i in order {
        let s = &mut supernodes[label[i]];
        s.members.push(nodes[i]);
        s.importances.push(importances[i]);
        rows[label[i]].push(i);
    }
    for (s, rows) in supernodes.iter_mut().zip(&rows) {
        let w = s.pool_weights();
        for (wi, &r) in w.iter().zip(rows) {
            for (acc, x) in s.h.iter_mut().zip(h.row(r)) {
                *acc += wi * x;
            }
        }
    }
    let mut links: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for &(u, v, w) in edges {
        let (a, b) = (label[u].min(label[v]), label[u].max(label[v]));
        if a != b {
            *links.entry((a, b)).or_default() += w;
        }
    }
    PooledGraph {
        supernodes,
        superedges: links
            .into_iter()
            .map(|((a, b), weight)| Superedge { a, b, weight })
            .collect(),
    }
}

/// Disjoint union; supernode indices are shifted, windows keep their ids.
pub fn merge_windows(parts: Vec<PooledGraph>) -> PooledGraph {
    let mut out = PooledGraph::default();
    for part in parts {
        let offset = out.supernodes.len();
        out.supernodes.extend(part.supernodes);
        out.superedges.extend(part.superedges.into_iter().map(|e| Superedge {
            a: e.a + offset,
            b: e.b + offset,
            weight: e.weight,
        }));
    }
    out
}

/// Per-window sizes before and after sampling/pooling.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PoolStats {
    pub window: usize,
    pub nodes: usize,
    pub edges: usize,
    pub sampled_nodes: usize,
    pub kept_edges: usize,
    pub supernodes: usize,
    pub superedges: usize,
}

/// Samples, filters and pools one window. `node_h` maps a slice position
/// to its feature row; `s_norm` and `clustering` are indexed globally.
pub fn pool_window(
    slice: &WindowSlice,
    node_h: &Matrix,
    s_norm: &[f64],
    clustering: &[f64],
    cfg: &PoolConfig,
) -> (PooledGraph, PoolStats) {
    let w = &cfg.weights;
    let deg = slice.degree();
    let max_deg = deg.iter().copied().fold(0.0, f64::max);
    let imp: Vec<f64> = slice
        .nodes
        .iter()
        .enumerate()
        .map(|(i, &v)| node_importance(s_norm[v], deg[i], max_deg, clustering[v], w))
        .collect();
    let theta = w.theta.unwrap_or_else(|| median(&imp));
    let sampled = sample_nodes(&imp, theta, cfg.max_sample);
    let pos: HashMap<usize, usize> = slice.nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let local: HashMap<usize, usize> = sampled.iter().enumerate().map(|(j, &i)| (i, j)).collect();
    let mut kept = Vec::new();
    for &(u, v, wt) in &slice.edges {
        let (pu, pv) = (pos[&u], pos[&v]);
        if let (Some(&a), Some(&b)) = (local.get(&pu), local.get(&pv)) {
            let ie = edge_importance(wt, node_h.row(pu), node_h.row(pv), w);
            if ie >= w.delta {
                kept.push((a, b, ie));
            }
        }
    }
    let mut h = Matrix::zeros(sampled.len(), node_h.cols);
    for (j, &i) in sampled.iter().enumerate() {
        h.row_mut(j).copy_from_slice(node_h.row(i));
    }
    let nodes: Vec<usize> = sampled.iter().map(|&i| slice.nodes[i]).collect();
    let simp: Vec<f64> = sampled.iter().map(|&i| imp[i]).collect();
    let k = nodes.len().div_ceil(cfg.cluster_divisor).max(1);
    let pooled = cluster_pool(slice.window, &nodes, &h, &simp, &kept, k, cfg.max_sweeps);
    let stats = PoolStats {
        window: slice.window,
        nodes: slice.nodes.len(),
        edges: slice.edges.len(),
        sampled_nodes: nodes.len(),
        kept_edges: kept.len(),
        supernodes: pooled.supernodes.len(),
        superedges: pooled.superedges.len(),
    };
    (pooled, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{windows_over, ReviewEvent, WindowSpec};
    use proptest::prelude::*;

    fn w() -> ImportanceWeights {
        ImportanceWeights::default()
    }

    #[test]
    fn node_importance_examples() {
        assert_eq!(node_importance(1.0, 4.0, 4.0, 1.0, &w()), 1.0);
        assert_eq!(node_importance(0.0, 0.0, 4.0, 0.0, &w()), 0.0);
        assert!((node_importance(0.8, 0.5, 1.0, 0.0, &w()) - 0.55).abs() < 1e-12);
        assert_eq!(node_importance(0.0, 0.0, 0.0, 0.0, &w()), 0.0);
    }

    #[test]
    fn sampling_examples() {
        let imp = [0.1, 0.5, 0.3, 0.9, 0.7];
        assert_eq!(sample_nodes(&imp, 0.0, 1000), vec![0, 1, 2, 3, 4]);
        assert_eq!(sample_nodes(&imp, 1.0 + 1e-9, 1000), vec![3]);
        // sort oracle
        let mut idx: Vec<usize> = (0..5).collect();
        idx.sort_by(|&a, &b| imp[b].partial_cmp(&imp[a]).unwrap());
        let mut top2 = idx[..2].to_vec();
        top2.sort();
        assert_eq!(sample_nodes(&imp, 0.0, 2), top2);
    }

    #[test]
    fn induce_edges_examples() {
        let edges = vec![(0, 4, 1.0), (1, 5, 1.0), (2, 6, 1.0), (3, 7, 1.0)];
        assert!(induce_edges(&edges, &[0, 1, 6, 7]).is_empty());
        assert_eq!(induce_edges(&edges, &(0..8).collect::<Vec<_>>()), edges);
        // enumeration oracle: exactly the edges with both ends sampled
        let sampled = [0, 4, 1, 6];
        let oracle: Vec<_> = edges
            .iter()
            .copied()
            .filter(|e| sampled.contains(&e.0) && sampled.contains(&e.1))
            .collect();
        assert_eq!(oracle.len(), 1);
        assert_eq!(induce_edges(&edges, &sampled), oracle);
    }

    #[test]
    fn edge_importance_examples() {
        assert!((edge_importance(1.0, &[1.0, 2.0], &[1.0, 2.0], &w()) - 1.0).abs() < 1e-12);
        let b0 = ImportanceWeights {
            beta: [0.0, 1.0],
            ..w()
        };
        assert_eq!(edge_importance(1.0, &[1.0, 0.0], &[0.0, 1.0], &b0), 0.0);
        // cos = 0.8 for (1,0)·(0.8,0.6)
        assert!((edge_importance(0.4, &[1.0, 0.0], &[0.8, 0.6], &w()) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn pool_single_and_equal_weights() {
        let h = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 6.0], vec![5.0, -1.0]]);
        let p = cluster_pool(0, &[7, 8, 9], &h, &[0.4, 0.4, 0.9], &[(0, 1, 1.0)], 3, 20);
        assert_eq!(p.supernodes.len(), 2);
        assert_eq!(p.supernodes[0].members, vec![7, 8]);
        assert_eq!(p.supernodes[0].h, vec![2.0, 4.0]);
        assert_eq!(p.supernodes[1].h, vec![5.0, -1.0]);
    }

    #[test]
    fn superedge_sums_cross_importance() {
        // two triangles joined by two edges of importance 0.2 and 0.3
        let edges = vec![
            (0, 1, 1.0),
            (1, 2, 1.0),
            (0, 2, 1.0),
            (3, 4, 1.0),
            (4, 5, 1.0),
            (3, 5, 1.0),
            (2, 3, 0.2),
            (1, 4, 0.3),
        ];
        let h = Matrix::filled(6, 1, 1.0);
        let p = cluster_pool(0, &[0, 1, 2, 3, 4, 5], &h, &[1.0; 6], &edges, 2, 20);
        assert_eq!(p.supernodes.len(), 2);
        assert_eq!(p.superedges.len(), 1);
        assert!((p.superedges[0].weight - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cap_merges_down_to_k() {
        // a path of four components-worth of pairs linked weakly
        let edges = vec![(0, 1, 1.0), (2, 3, 1.0), (1, 2, 0.1), (4, 5, 1.0), (3, 4, 0.1)];
        let h = Matrix::filled(6, 1, 1.0);
        let p = cluster_pool(0, &[0, 1, 2, 3, 4, 5], &h, &[1.0; 6], &edges, 1, 20);
        assert_eq!(p.supernodes.len(), 1);
        assert!(p.superedges.is_empty());
        // isolated nodes cannot merge, so k may be exceeded
        let p = cluster_pool(0, &[0, 1, 2], &Matrix::filled(3, 1, 1.0), &[1.0; 3], &[], 1, 20);
        assert_eq!(p.supernodes.len(), 3);
    }

    #[test]
    fn merge_examples() {
        let h = Matrix::filled(3, 1, 1.0);
        let a = cluster_pool(0, &[0, 1, 2], &h, &[1.0; 3], &[], 3, 20);
        assert_eq!(merge_windows(vec![a.clone()]), a);
        let h4 = Matrix::filled(4, 1, 1.0);
        let b = cluster_pool(1, &[0, 3, 4, 5], &h4, &[1.0; 4], &[], 4, 20);
        let m = merge_windows(vec![a, b]);
        assert_eq!(m.num_supernodes(), 7);
        assert!(m.superedges.is_empty());
        assert_eq!(m.name(4), "w1:c1");
        assert_eq!(m.locate(1, 0), Some(3));
        assert_eq!(m.locate(0, 5), None);
    }

    fn toy_graph() -> TemporalBipartiteGraph {
        let mut ev = Vec::new();
        for r in 0..12 {
            for p in 0..3 {
                if (r + p) % 2 == 0 || r < 4 {
                    ev.push(ReviewEvent {
                        reviewer_id: format!("r{r}"),
                        product_id: format!("p{}", (r / 4) * 3 + p),
                        timestamp: (r * 1000 + p * 37) as i64,
                        rating: 1.0 + ((r + p) % 5) as f64,
                        content_len: 10,
                    });
                }
            }
        }
        TemporalBipartiteGraph::from_events(&ev)
    }

    fn pool_toy(theta: Option<f64>) -> (PooledGraph, Vec<PoolStats>, Vec<WindowSlice>) {
        let g = toy_graph();
        let (lo, hi) = g.time_range().unwrap();
        let wins = windows_over(lo, hi, WindowSpec::Count(2)).unwrap();
        let slices = window_slices(&g, &wins);
        let n = g.num_nodes();
        let s_norm: Vec<f64> = (0..n).map(|v| (v % 5) as f64 / 4.0).collect();
        let clust: Vec<f64> = (0..n).map(|v| (v % 3) as f64 / 2.0).collect();
        let cfg = PoolConfig {
            weights: ImportanceWeights { theta, ..w() },
            ..PoolConfig::default()
        };
        let mut parts = Vec::new();
        let mut stats = Vec::new();
        for s in &slices {
            let h = Matrix::from_rows(
                &s.nodes.iter().map(|&v| vec![v as f64, 1.0, s_norm[v]]).collect::<Vec<_>>(),
            );
            let (p, st) = pool_window(s, &h, &s_norm, &clust, &cfg);
            parts.push(p);
            stats.push(st);
        }
        (merge_windows(parts), stats, slices)
    }

    #[test]
    fn provenance_is_unique_and_sizes_shrink() {
        let (pooled, stats, slices) = pool_toy(None);
        for st in &stats {
            assert!(st.sampled_nodes <= st.nodes.min(1000));
            assert!(st.superedges <= st.edges);
            assert!(st.kept_edges <= st.edges);
        }
        for s in &slices {
            for &v in &s.nodes {
                let hits = pooled
                    .supernodes
                    .iter()
                    .filter(|sn| sn.window == s.window && sn.members.contains(&v))
                    .count();
                assert!(hits <= 1);
            }
        }
        for sn in &pooled.supernodes {
            assert!(!sn.members.is_empty());
            assert!(sn.pool_weights().iter().sum::<f64>() > 0.0);
        }
        assert!(pooled.superedges.iter().all(|e| e.weight >= 0.0));
    }

    #[test]
    fn raising_theta_never_grows_sample() {
        let mut prev = usize::MAX;
        for t in [0.0, 0.2, 0.4, 0.6, 0.8, 1.0] {
            let (_, stats, _) = pool_toy(Some(t));
            let total: usize = stats.iter().map(|s| s.sampled_nodes).sum();
            assert!(total <= prev);
            prev = total;
        }
    }

    #[test]
    fn pooling_is_deterministic() {
        assert_eq!(pool_toy(None).0, pool_toy(None).0);
    }

    #[test]
    fn weights_validation() {
        assert!(w().validate().is_ok());
        let bad = ImportanceWeights {
            alpha: [0.5, 0.5, 0.2],
            ..w()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn pooled_vectors_stay_in_member_hull(
            vals in proptest::collection::vec(-5.0f64..5.0, 12),
            imps in proptest::collection::vec(0.0f64..1.0, 6),
            mask in proptest::collection::vec(any::<bool>(), 15),
        ) {
            let h = Matrix::from_vec(6, 2, vals);
            let mut edges = Vec::new();
            let mut m = 0;
            for u in 0..6 {
                for v in u + 1..6 {
                    if mask[m] { edges.push((u, v, 0.5)); }
                    m += 1;
                }
            }
            let nodes: Vec<usize> = (0..6).collect();
            let p = cluster_pool(0, &nodes, &h, &imps, &edges, 2, 20);
            let mut seen = 0;
            for s in &p.supernodes {
                seen += s.members.len();
                for c in 0..2 {
                    let lo = s.members.iter().map(|&i| h.get(i, c)).fold(f64::INFINITY, f64::min);
                    let hi = s.members.iter().map(|&i| h.get(i, c)).fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(s.h[c] >= lo - 1e-9 && s.h[c] <= hi + 1e-9);
                }
            }
            prop_assert_eq!(seen, 6);
            prop_assert!(p.superedges.len() <= edges.len());
        }

        #[test]
        fn sample_size_bounds(imps in proptest::collection::vec(0.0f64..1.0, 1..40), theta in 0.0f64..1.0, ms in 1usize..10) {
            let s = sample_nodes(&imps, theta, ms);
            prop_assert!(!s.is_empty());
            prop_assert!(s.len() <= ms.min(imps.len()));
        }
    }
}
