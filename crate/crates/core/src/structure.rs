//! Structural node metrics: PageRank-weighted neighbour diversity and
//! fractal/spectral self-similarity of ego-networks.

use std::collections::{BTreeSet, HashMap, VecDeque};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{NodeKind, TemporalBipartiteGraph};
use crate::linalg::{ols, std_dev};

/// Simple undirected graph over `0..n` with sorted adjacency lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdjGraph {
    adj: Vec<Vec<usize>>,
}

impl AdjGraph {
    pub fn with_nodes(n: usize) -> Self {
        Self { adj: vec![Vec::new(); n] }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for &(u, v) in edges {
            if u != v {
                sets[u].insert(v);
                sets[v].insert(u);
            }
        }
        Self {
            adj: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        }
    }

    pub fn from_bipartite(g: &TemporalBipartiteGraph) -> Self {
        Self {
            adj: (0..g.num_nodes()).map(|v| g.neighbors(v).to_vec()).collect(),
        }
    }

    pub fn path(n: usize) -> Self {
        let e: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::from_edges(n, &e)
    }

    pub fn cycle(n: usize) -> Self {
        let e: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Self::from_edges(n, &e)
    }

    /// Star with centre 0 and `leaves` leaves.
    pub fn star(leaves: usize) -> Self {
        let e: Vec<_> = (1..=leaves).map(|i| (0, i)).collect();
        Self::from_edges(leaves + 1, &e)
    }

    pub fn complete(n: usize) -> Self {
        let mut e = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                e.push((i, j));
            }
        }
        Self::from_edges(n, &e)
    }

    pub fn num_nodes(&self) -> usize {
        self.adj.len()
    }

    pub fn num_edges(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    /// Subgraph induced by `nodes` (relabelled in the given order).
    pub fn induced(&self, nodes: &[usize]) -> AdjGraph {
        let mut pos = vec![usize::MAX; self.adj.len()];
        for (i, &v) in nodes.iter().enumerate() {
            pos[v] = i;
        }
        let adj = nodes
            .iter()
            .map(|&v| {
                let mut row: Vec<usize> = self.adj[v]
                    .iter()
                    .filter_map(|&u| (pos[u] != usize::MAX).then_some(pos[u]))
                    .collect();
                row.sort_unstable();
                row
            })
            .collect();
        AdjGraph { adj }
    }

    /// Hop distances from `src`; `u32::MAX` marks unreachable nodes.
    pub fn bfs(&self, src: usize) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.adj.len()];
        dist[src] = 0;
        let mut q = VecDeque::from([src]);
        while let Some(x) = q.pop_front() {
            for &u in &self.adj[x] {
                if dist[u] == u32::MAX {
                    dist[u] = dist[x] + 1;
                    q.push_back(u);
                }
            }
        }
        dist
    }

    pub fn all_pairs_distances(&self) -> Vec<Vec<u32>> {
        (0..self.adj.len()).map(|s| self.bfs(s)).collect()
    }

    pub fn is_connected(&self) -> bool {
        self.adj.is_empty() || self.bfs(0).iter().all(|&d| d != u32::MAX)
    }
}

fn diameter_of(dist: &[Vec<u32>]) -> u32 {
    dist.iter()
        .flat_map(|row| row.iter().copied().filter(|&d| d != u32::MAX))
        .max()
        .unwrap_or(0)
}

// ---------------------------------------------------------------------------
// Entropy, centrality, PageRank, diversity

/// Shannon entropy (natural log) of a probability vector.
pub fn entropy(p: &[f64]) -> Result<f64> {
    let s: f64 = p.iter().sum();
    if p.iter().any(|&x| x < 0.0 || !x.is_finite()) || (s - 1.0).abs() > 1e-9 {
        return Err(Error::NotNormalized(s));
    }
    Ok(plogp_sum(p))
}

/// `−Σ x ln x` with `0 ln 0 = 0`, no normalization check.
fn plogp_sum(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum()
}

/// `deg(v) / (N − 1)`; zero for a single-node graph.
pub fn degree_centrality(g: &AdjGraph, v: usize) -> f64 {
    let n = g.num_nodes();
    if n < 2 {
        0.0
    } else {
        g.degree(v) as f64 / (n - 1) as f64
    }
}

pub const PAGERANK_TOL: f64 = 1e-8;
pub const PAGERANK_MAX_ITER: usize = 200;

/// Un-normalized PageRank: `PR(v) = (1−d) + d Σ_{u∈N(v)} PR(u)/κ(u)`.
/// Values average to one per node on graphs without isolated nodes.
pub fn pagerank(g: &AdjGraph, damping: f64) -> Result<Vec<f64>> {
    if !(damping > 0.0 && damping < 1.0) {
        return Err(Error::InvalidArgument(format!("damping {damping} not in (0,1)")));
    }
    let n = g.num_nodes();
    let mut pr = vec![1.0; n];
    let mut next = vec![0.0; n];
    for _ in 0..PAGERANK_MAX_ITER {
        for (v, slot) in next.iter_mut().enumerate() {
            let s: f64 = g
                .neighbors(v)
                .iter()
                .map(|&u| pr[u] / g.degree(u) as f64)
                .sum();
            *slot = (1.0 - damping) + damping * s;
        }
        let delta = pr
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut pr, &mut next);
        if delta < PAGERANK_TOL {
            break;
        }
    }
    Ok(pr)
}

/// Category weights `ω_k = p_k · PR_k / Σ_j PR_j` over the neighbours of `v`,
/// in ascending category order.
pub fn diversity_weights(g: &AdjGraph, v: usize, categories: &[usize], pagerank: &[f64]) -> Vec<f64> {
    let nbrs = g.neighbors(v);
    if nbrs.is_empty() {
        return Vec::new();
    }
    let k = nbrs.iter().map(|&u| categories[u]).max().unwrap_or(0) + 1;
    let mut count = vec![0usize; k];
    let mut mass = vec![0.0; k];
    for &u in nbrs {
        count[categories[u]] += 1;
        mass[categories[u]] += pagerank[u];
    }
    let total: f64 = mass.iter().sum();
    (0..k)
        .filter(|&c| count[c] > 0)
        .map(|c| {
            let p = count[c] as f64 / nbrs.len() as f64;
            let share = if total > 0.0 { mass[c] / total } else { 0.0 };
            p * share
        })
        .collect()
}

/// PageRank-adjusted neighbour entropy `H_pageRank(v)`; the weights are used
/// as given, without renormalization.
pub fn pagerank_entropy(g: &AdjGraph, v: usize, categories: &[usize], pagerank: &[f64]) -> f64 {
    plogp_sum(&diversity_weights(g, v, categories, pagerank))
}

/// Diversity `η(v) = H_pageRank(v) / max_u H_pageRank(u)` for every node.
pub fn neighbor_diversity(g: &AdjGraph, categories: &[usize], pagerank: &[f64]) -> Vec<f64> {
    let h: Vec<f64> = (0..g.num_nodes())
        .map(|v| pagerank_entropy(g, v, categories, pagerank))
        .collect();
    let max = h.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return vec![0.0; h.len()];
    }
    h.into_iter().map(|x| x / max).collect()
}

/// Degree-quartile category (0..=3) of every node, with quartile cut points
/// computed separately for each node kind.
pub fn degree_quartile_categories(g: &TemporalBipartiteGraph) -> Vec<usize> {
    let mut cats = vec![0; g.num_nodes()];
    for kind in [NodeKind::Reviewer, NodeKind::Product] {
        let nodes: Vec<usize> = (0..g.num_nodes()).filter(|&v| g.kind(v) == kind).collect();
        if nodes.is_empty() {
            continue;
        }
        let mut degs: Vec<usize> = nodes.iter().map(|&v| g.degree(v)).collect();
        degs.sort_unstable();
        let q = |f: f64| degs[((degs.len() - 1) as f64 * f).round() as usize];
        let cuts = [q(0.25), q(0.5), q(0.75)];
        for &v in &nodes {
            let d = g.degree(v);
            cats[v] = cuts.iter().filter(|&&c| d > c).count();
        }
    }
    cats
}

// ---------------------------------------------------------------------------
// Self-similarity

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub r_squared: f64,
    pub sample_points: usize,
}

impl PowerLawFit {
    pub const INVALID: PowerLawFit = PowerLawFit {
        exponent: 0.0,
        r_squared: 0.0,
        sample_points: 0,
    };

    pub fn is_valid(&self) -> bool {
        self.sample_points >= 3
    }
}

pub const DEFAULT_BOX_SIZES: [usize; 5] = [1, 2, 4, 8, 16];

/// Box assignment for box size `l`: every pair in a box is at distance < `l`.
/// Boxes come from greedy colouring of the "distance ≥ l" conflict graph in
/// node-index order.
fn greedy_boxes(dist: &[Vec<u32>], l: usize) -> Vec<usize> {
    let n = dist.len();
    if l <= 1 {
        return (0..n).collect();
    }
    let l = l as u32;
    let mut color = vec![usize::MAX; n];
    // stamp[c] == i marks colour c as blocked for node i
    let mut stamp: Vec<usize> = Vec::new();
    for i in 0..n {
        let row = &dist[i];
        for j in 0..i {
            if row[j] >= l {
                stamp[color[j]] = i + 1;
            }
        }
        let c = stamp.iter().position(|&s| s != i + 1).unwrap_or(stamp.len());
        if c == stamp.len() {
            stamp.push(0);
        }
        color[i] = c;
    }
    color
}

/// Box counts `N(l)` for each requested size. A cover found at a smaller
/// size is reused when it needs fewer boxes, so counts never increase.
pub fn box_counts(g: &AdjGraph, sizes: &[usize]) -> Vec<usize> {
    let dist = g.all_pairs_distances();
    box_counts_with(&dist, sizes)
}

fn box_counts_with(dist: &[Vec<u32>], sizes: &[usize]) -> Vec<usize> {
    let mut best = usize::MAX;
    sizes
        .iter()
        .map(|&l| {
            let colors = greedy_boxes(dist, l.max(1));
            let k = colors.iter().copied().max().map_or(0, |m| m + 1);
            best = best.min(k);
            best
        })
        .collect()
}

/// Fractal (box-counting) dimension: slope of `ln N(l)` against `ln(1/l)`.
/// Only sizes `l ≤ diameter` enter the fit; diameter < 4 is invalid.
pub fn box_counting_dimension(g: &AdjGraph, sizes: &[usize]) -> PowerLawFit {
    if g.num_nodes() < 2 {
        return PowerLawFit::INVALID;
    }
    let dist = g.all_pairs_distances();
    box_dimension_from(&dist, sizes)
}

fn box_dimension_from(dist: &[Vec<u32>], sizes: &[usize]) -> PowerLawFit {
    let diam = diameter_of(dist) as usize;
    if diam < 4 {
        return PowerLawFit::INVALID;
    }
    let usable: Vec<usize> = sizes.iter().copied().filter(|&l| l >= 1 && l <= diam).collect();
    if usable.len() < 3 {
        return PowerLawFit::INVALID;
    }
    let counts = box_counts_with(dist, &usable);
    let xs: Vec<f64> = usable.iter().map(|&l| -(l as f64).ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|&c| (c as f64).ln()).collect();
    let (slope, _, r2) = ols(&xs, &ys);
    PowerLawFit {
        exponent: slope,
        r_squared: r2,
        sample_points: usable.len(),
    }
}

/// Eigenvalues of the combinatorial Laplacian `D − A`, ascending.
///
/// Twin vertices (identical neighbour sets) are collapsed first: each class
/// of `k` twins with degree `d` contributes `d` with multiplicity `k − 1`,
/// and the class-constant subspace is solved through the symmetric quotient
/// `B_CD = −√(k_C k_D)` for adjacent classes. Pendant-heavy ego networks
/// shrink by an order of magnitude this way.
pub fn laplacian_eigenvalues(g: &AdjGraph) -> Vec<f64> {
    let n = g.num_nodes();
    if n == 0 {
        return Vec::new();
    }
    let mut class_of = vec![0usize; n];
    let mut classes: Vec<Vec<usize>> = Vec::new();
    let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
    for v in 0..n {
        let mut key = g.neighbors(v).to_vec();
        key.sort_unstable();
        let c = *index.entry(key).or_insert_with(|| {
            classes.push(Vec::new());
            classes.len() - 1
        });
        classes[c].push(v);
        class_of[v] = c;
    }
    let m = classes.len();
    let mut ev = Vec::with_capacity(n);
    let mut b = DMatrix::<f64>::zeros(m, m);
    for (c, members) in classes.iter().enumerate() {
        let rep = members[0];
        let d = g.degree(rep) as f64;
        ev.extend(std::iter::repeat(d).take(members.len() - 1));
        b[(c, c)] = d;
        let kc = members.len() as f64;
        for &u in g.neighbors(rep) {
            let o = class_of[u];
            b[(c, o)] = -(kc * classes[o].len() as f64).sqrt();
        }
    }
    ev.extend(b.symmetric_eigenvalues().iter().copied());
    ev.sort_by(f64::total_cmp);
    ev
}

/// Plain dense eigen-solve of `D − A`; reference for the twin reduction.
pub fn laplacian_eigenvalues_dense(g: &AdjGraph) -> Vec<f64> {
    let n = g.num_nodes();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for v in 0..n {
        l[(v, v)] = g.degree(v) as f64;
        for &u in g.neighbors(v) {
            l[(v, u)] = -1.0;
        }
    }
    let mut ev: Vec<f64> = l.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub const DEFAULT_SPECTRAL_BINS: usize = 10;

/// Power-law exponent β of the positive Laplacian eigenvalue density
/// `P(λ) ~ λ^{−β}`, from log-spaced histogram bins.
pub fn spectral_exponent(g: &AdjGraph, bins: usize) -> PowerLawFit {
    spectral_exponent_from(&laplacian_eigenvalues(g), bins)
}

pub fn spectral_exponent_from(eigenvalues: &[f64], bins: usize) -> PowerLawFit {
    let pos: Vec<f64> = eigenvalues.iter().copied().filter(|&l| l > 1e-9).collect();
    if pos.len() < 3 || bins < 3 {
        return PowerLawFit::INVALID;
    }
    let lo = pos[0].ln();
    let hi = pos[pos.len() - 1].ln();
    if hi - lo < 1e-12 {
        return PowerLawFit::INVALID;
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &l in &pos {
        let b = (((l.ln() - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let total = pos.len() as f64;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (b, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let left = (lo + b as f64 * width).exp();
        let right = (lo + (b + 1) as f64 * width).exp();
        let density = c as f64 / (total * (right - left));
        xs.push(((left * right).sqrt()).ln());
        ys.push(density.ln());
    }
    if xs.len() < 3 {
        return PowerLawFit::INVALID;
    }
    let (slope, _, r2) = ols(&xs, &ys);
    PowerLawFit {
        exponent: -slope,
        r_squared: r2,
        sample_points: xs.len(),
    }
}

/// Merges each box of the size-2 cover (adjacent groups) into a super-node.
pub fn coarse_grain(g: &AdjGraph) -> AdjGraph {
    let dist = g.all_pairs_distances();
    coarse_grain_with(g, &dist)
}

fn coarse_grain_with(g: &AdjGraph, dist: &[Vec<u32>]) -> AdjGraph {
    let boxes = greedy_boxes(dist, 2);
    let k = boxes.iter().copied().max().map_or(0, |m| m + 1);
    let mut edges = Vec::new();
    for v in 0..g.num_nodes() {
        for &u in g.neighbors(v) {
            if boxes[u] != boxes[v] {
                edges.push((boxes[v], boxes[u]));
            }
        }
    }
    AdjGraph::from_edges(k, &edges)
}

/// `M_v = exp(−std(C_f))` over the valid fits of successive coarse-grainings
/// (`levels` scales including the original); 0.5 with fewer than two valid
/// levels.
pub fn multiscale_consistency(g: &AdjGraph, levels: usize, sizes: &[usize]) -> f64 {
    let dist = g.all_pairs_distances();
    let base = if g.num_nodes() < 2 {
        PowerLawFit::INVALID
    } else {
        box_dimension_from(&dist, sizes)
    };
    consistency_given_base(g, &dist, base, levels, sizes)
}

/// Consistency when the level-0 distances and fit are already known.
fn consistency_given_base(g: &AdjGraph, dist: &[Vec<u32>], base: PowerLawFit, levels: usize, sizes: &[usize]) -> f64 {
    let levels = levels.max(2);
    let mut dims = Vec::new();
    if base.is_valid() {
        dims.push(base.exponent);
    }
    if g.num_nodes() < 2 {
        return consistency_from_dims(&dims);
    }
    let mut cur = coarse_grain_with(g, dist);
    if cur.num_nodes() == g.num_nodes() {
        return consistency_from_dims(&dims);
    }
    for level in 1..levels {
        if cur.num_nodes() < 2 {
            break;
        }
        let d = cur.all_pairs_distances();
        let fit = box_dimension_from(&d, sizes);
        if fit.is_valid() {
            dims.push(fit.exponent);
        }
        if level + 1 < levels {
            let next = coarse_grain_with(&cur, &d);
            if next.num_nodes() == cur.num_nodes() {
                break;
            }
            cur = next;
        }
    }
    consistency_from_dims(&dims)
}

pub fn consistency_from_dims(dims: &[f64]) -> f64 {
    if dims.len() < 2 {
        0.5
    } else {
        (-std_dev(dims)).exp().clamp(0.0, 1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfSimilarity {
    pub score: f64,
    pub geometric: f64,
    pub spectral: f64,
    pub consistency: f64,
    pub fractal: PowerLawFit,
    pub spectral_fit: PowerLawFit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StructureConfig {
    pub damping: f64,
    /// Balance of geometric vs spectral similarity.
    pub alpha: f64,
    pub ego_hops: usize,
    pub max_ego_nodes: usize,
    pub consistency_levels: usize,
    pub box_sizes: Vec<usize>,
    pub spectral_bins: usize,
    /// C_f is divided by this before clipping to [0,1].
    pub fractal_scale: f64,
    /// β is divided by this before clipping to [0,1].
    pub spectral_scale: f64,
    pub seed: u64,
}

impl Default for StructureConfig {
    fn default() -> Self {
        Self {
            damping: 0.85,
            alpha: 0.5,
            ego_hops: 2,
            max_ego_nodes: 512,
            consistency_levels: 3,
            box_sizes: DEFAULT_BOX_SIZES.to_vec(),
            spectral_bins: DEFAULT_SPECTRAL_BINS,
            fractal_scale: 2.0,
            spectral_scale: 3.0,
            seed: 72,
        }
    }
}

impl StructureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} not in [0,1]", self.alpha)));
        }
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(Error::Config(format!("damping {} not in (0,1)", self.damping)));
        }
        if !(1..=2).contains(&self.ego_hops) || self.max_ego_nodes < 2 || self.consistency_levels < 2 {
            return Err(Error::Config("invalid ego/consistency settings".into()));
        }
        if self.fractal_scale <= 0.0 || self.spectral_scale <= 0.0 {
            return Err(Error::Config("score scales must be positive".into()));
        }
        Ok(())
    }
}

/// Composite `S_v = (α S_g + (1−α) S_s) · M_v`.
pub fn combine_self_similarity(geometric: f64, spectral: f64, consistency: f64, alpha: f64) -> f64 {
    ((alpha * geometric + (1.0 - alpha) * spectral) * consistency).clamp(0.0, 1.0)
}

pub fn self_similarity(g: &AdjGraph, cfg: &StructureConfig) -> SelfSimilarity {
    let dist = g.all_pairs_distances();
    let fractal = if g.num_nodes() < 2 {
        PowerLawFit::INVALID
    } else {
        box_dimension_from(&dist, &cfg.box_sizes)
    };
    let spectral_fit = spectral_exponent(g, cfg.spectral_bins);
    let geometric = if fractal.is_valid() {
        (fractal.exponent / cfg.fractal_scale).clamp(0.0, 1.0) * fractal.r_squared
    } else {
        0.0
    };
    let spectral = if spectral_fit.is_valid() {
        (spectral_fit.exponent / cfg.spectral_scale).clamp(0.0, 1.0) * spectral_fit.r_squared
    } else {
        0.0
    };
    let consistency = consistency_given_base(g, &dist, fractal, cfg.consistency_levels, &cfg.box_sizes);
    let score = if fractal.is_valid() || spectral_fit.is_valid() {
        combine_self_similarity(geometric, spectral, consistency, cfg.alpha)
    } else {
        0.0
    };
    SelfSimilarity {
        score,
        geometric,
        spectral,
        consistency,
        fractal,
        spectral_fit,
    }
}

/// Ego-network node list (centre first) capped at `max_nodes`. When the cap
/// binds, nearer layers are kept first and each layer is sampled uniformly
/// among nodes adjacent to what is already kept, so the result stays
/// connected.
pub fn capped_ego_nodes(g: &AdjGraph, center: usize, hops: usize, max_nodes: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (center as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut kept = vec![center];
    let mut in_kept = std::collections::HashSet::from([center]);
    let mut frontier = vec![center];
    for _ in 0..hops {
        let mut layer: BTreeSet<usize> = BTreeSet::new();
        for &x in &frontier {
            for &u in g.neighbors(x) {
                if !in_kept.contains(&u) {
                    layer.insert(u);
                }
            }
        }
        let mut layer: Vec<usize> = layer.into_iter().collect();
        let room = max_nodes.saturating_sub(kept.len());
        if layer.len() > room {
            layer.shuffle(&mut rng);
            layer.truncate(room);
            layer.sort_unstable();
        }
        for &u in &layer {
            in_kept.insert(u);
        }
        kept.extend_from_slice(&layer);
        frontier = layer;
        if kept.len() >= max_nodes {
            break;
        }
    }
    kept
}

/// Bipartite clustering coefficient: mean Jaccard overlap between `N(v)` and
/// `N(u)` over second neighbours `u`.
pub fn bipartite_clustering(g: &AdjGraph) -> Vec<f64> {
    let n = g.num_nodes();
    let mut shared = vec![0usize; n];
    let mut touched = Vec::new();
    (0..n)
        .map(|v| {
            for &p in g.neighbors(v) {
                for &u in g.neighbors(p) {
                    if u != v {
                        if shared[u] == 0 {
                            touched.push(u);
                        }
                        shared[u] += 1;
                    }
                }
            }
            let dv = g.degree(v);
            let mut acc = 0.0;
            for &u in &touched {
                let s = shared[u];
                acc += s as f64 / (dv + g.degree(u) - s) as f64;
            }
            let out = if touched.is_empty() {
                0.0
            } else {
                acc / touched.len() as f64
            };
            for &u in &touched {
                shared[u] = 0;
            }
            touched.clear();
            out
        })
        .collect()
}

/// Per-node structural profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeStructureProfile {
    pub node: usize,
    pub degree_centrality: f64,
    pub pagerank: f64,
    pub diversity: f64,
    pub self_similarity: f64,
    pub geometric_score: f64,
    pub spectral_score: f64,
    pub consistency: f64,
    pub clustering_coeff: f64,
}

pub fn compute_profiles(g: &TemporalBipartiteGraph, cfg: &StructureConfig) -> Result<Vec<NodeStructureProfile>> {
    cfg.validate()?;
    let adj = AdjGraph::from_bipartite(g);
    let pr = pagerank(&adj, cfg.damping)?;
    let cats = degree_quartile_categories(g);
    let eta = neighbor_diversity(&adj, &cats, &pr);
    let clust = bipartite_clustering(&adj);
    let profiles = (0..adj.num_nodes())
        .map(|v| {
            let nodes = capped_ego_nodes(&adj, v, cfg.ego_hops, cfg.max_ego_nodes, cfg.seed);
            let ego = adj.induced(&nodes);
            let ss = self_similarity(&ego, cfg);
            NodeStructureProfile {
                node: v,
                degree_centrality: degree_centrality(&adj, v),
                pagerank: pr[v],
                diversity: eta[v],
                self_similarity: ss.score,
                geometric_score: ss.geometric,
                spectral_score: ss.spectral,
                consistency: ss.consistency,
                clustering_coeff: clust[v],
            }
        })
        .collect();
    Ok(profiles)
}

pub fn write_profiles_csv<W: std::io::Write>(
    g: &TemporalBipartiteGraph,
    profiles: &[NodeStructureProfile],
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["node_id", "C", "PR", "eta", "S_v", "S_g", "S_s", "M_v", "C_clust"])?;
    for p in profiles {
        w.write_record([
            g.node_name(p.node).to_string(),
            p.degree_centrality.to_string(),
            p.pagerank.to_string(),
            p.diversity.to_string(),
            p.self_similarity.to_string(),
            p.geometric_score.to_string(),
            p.spectral_score.to_string(),
            p.consistency.to_string(),
            p.clustering_coeff.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
